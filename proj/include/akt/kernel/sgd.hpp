#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

/// A named parameter tensor together with its gradient buffer.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct SgdHyper {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Heavy-ball SGD state: one velocity buffer per parameter.
class OptimizerState {
public:
  OptimizerState() = default;
  OptimizerState(std::span<const ParamRef> params, SgdHyper hyper) : hyper_(hyper) {
    validate(hyper);
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.value->shape());
  }

  [[nodiscard]] const SgdHyper& hyper() const noexcept { return hyper_; }
  void set_lr(double lr) {
    hyper_.lr = lr;
    validate(hyper_);
  }
  [[nodiscard]] std::vector<Tensor>& velocity() noexcept { return velocity_; }
  [[nodiscard]] const std::vector<Tensor>& velocity() const noexcept { return velocity_; }

  static void validate(const SgdHyper& h) {
    if (!(h.lr > 0.0) || !std::isfinite(h.lr)) throw ValidationError("sgd: learning rate must be positive");
    if (!(h.momentum >= 0.0 && h.momentum < 1.0)) throw ValidationError("sgd: momentum must lie in [0,1)");
    if (!(h.weight_decay >= 0.0) || !std::isfinite(h.weight_decay)) throw ValidationError("sgd: weight decay must be >= 0");
  }

private:
  SgdHyper hyper_;
  std::vector<Tensor> velocity_;
};

/// v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
inline void sgd_step(std::span<const ParamRef> params, OptimizerState& state) {
  auto& vel = state.velocity();
  if (vel.size() != params.size()) {
    throw ShapeError("sgd_step: optimizer tracks " + std::to_string(vel.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (p.value->shape() != p.grad->shape() || p.value->shape() != vel[k].shape()) {
      throw ShapeError("sgd_step: shape mismatch for parameter " + p.name);
    }
    if (!p.grad->all_finite()) throw NumericError("sgd_step: non-finite gradient in parameter " + p.name);
  }
  const auto [lr, mu, wd] = state.hyper();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto pv = params[k].value->values();
    const auto gv = params[k].grad->values();
    auto vv = vel[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      vv[i] = mu * vv[i] + (gv[i] + wd * pv[i]);
      pv[i] -= lr * vv[i];
    }
  }
}

inline void zero_grads(std::span<const ParamRef> params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

}  // namespace akt
