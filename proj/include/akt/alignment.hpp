#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "akt/error.hpp"
#include "akt/kernel/affine.hpp"
#include "akt/kernel/loss.hpp"
#include "akt/networks.hpp"
#include "akt/tensor.hpp"

namespace akt {

enum class AlignmentMode { adversarial, mse, none };

inline const char* to_string(AlignmentMode m) {
  switch (m) {
    case AlignmentMode::adversarial: return "adversarial";
    case AlignmentMode::mse: return "mse";
    case AlignmentMode::none: return "none";
  }
  return "?";
}

struct AlignmentConfig {
  double lambda_di = 1.0;
  double lambda_dg = 1.0;
  AlignmentMode mode = AlignmentMode::adversarial;

  void validate() const {
    if (!(std::isfinite(lambda_di) && lambda_di >= 0.0) || !(std::isfinite(lambda_dg) && lambda_dg >= 0.0)) {
      throw ValidationError("AlignmentConfig: discriminator loss weights must be finite and >= 0");
    }
  }
};

/// Binary feature discriminator: ReLU hidden layers and a single raw output logit.
class Discriminator {
public:
  Discriminator() = default;
  Discriminator(std::size_t feature_dim, const std::vector<std::size_t>& hidden_dims)
      : feature_dim_(feature_dim), hidden_(feature_dim, hidden_dims), out_(hidden_.output_dim(feature_dim), 1) {}

  [[nodiscard]] std::size_t feature_dim() const noexcept { return feature_dim_; }

  Tensor forward(const Tensor& f) {
    if (f.rank() != 2 || f.cols() != feature_dim_) {
      throw ShapeError("discriminator: feature shape " + f.shape_string() + " but expected width " + std::to_string(feature_dim_));
    }
    return affine_forward(hidden_.forward(f), out_);
  }

  Tensor backward(const Tensor& grad_logits) { return hidden_.backward(affine_backward(grad_logits, out_)); }

  /// Gradient with respect to the input features; discriminator gradient buffers stay untouched.
  [[nodiscard]] Tensor backward_input(const Tensor& grad_logits) const {
    return hidden_.backward_input(ReluStack::affine_input_grad(grad_logits, out_));
  }

  void init(Rng& rng) {
    hidden_.init(rng);
    glorot_init(out_, rng);
  }

  [[nodiscard]] std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    hidden_.append_params(out, "hidden");
    out.push_back({"out.W", &out_.W, &out_.grad_W});
    out.push_back({"out.b", &out_.b, &out_.grad_b});
    return out;
  }

  void zero_grad() {
    for (auto& l : hidden_.layers()) l.zero_grad();
    out_.zero_grad();
  }

  [[nodiscard]] ReluStack& hidden() noexcept { return hidden_; }
  [[nodiscard]] AffineLayer& output_layer() noexcept { return out_; }

private:
  std::size_t feature_dim_ = 0;
  ReluStack hidden_;
  AffineLayer out_;
};

inline Discriminator init_discriminator(std::size_t feature_dim, const std::vector<std::size_t>& hidden_dims,
                                        std::uint64_t seed) {
  Discriminator d(feature_dim, hidden_dims);
  Rng rng(seed);
  d.init(rng);
  return d;
}

inline Tensor disc_forward(Discriminator& d, const Tensor& features) { return d.forward(features); }

namespace detail {

inline Tensor stack_rows(const Tensor& top, const Tensor& bottom) {
  if (top.cols() != bottom.cols()) throw ShapeError("feature widths differ: " + top.shape_string() + " vs " + bottom.shape_string());
  std::vector<double> data(top.storage());
  data.insert(data.end(), bottom.storage().begin(), bottom.storage().end());
  return Tensor({top.rows() + bottom.rows(), top.cols()}, std::move(data));
}

/// Real rows (label 1) followed by fake rows (label 0). Each half is averaged separately.
/// Accumulates weight * gradient into the discriminator and returns the unweighted loss.
inline double real_fake_loss(Discriminator& d, const Tensor& real, const Tensor& fake, double weight) {
  const Tensor logits = d.forward(stack_rows(real, fake));
  const std::size_t nr = real.rows();
  const std::size_t nf = fake.rows();
  double loss_real = 0.0;
  double loss_fake = 0.0;
  Tensor grad(logits.shape());
  for (std::size_t i = 0; i < nr; ++i) {
    loss_real += neg_log_sigmoid(logits[i]);
    grad[i] = weight * (sigmoid(logits[i]) - 1.0) / static_cast<double>(nr);
  }
  for (std::size_t i = nr; i < nr + nf; ++i) {
    loss_fake += neg_log_one_minus_sigmoid(logits[i]);
    grad[i] = weight * sigmoid(logits[i]) / static_cast<double>(nf);
  }
  const double loss = loss_real / static_cast<double>(nr) + loss_fake / static_cast<double>(nf);
  if (!std::isfinite(loss)) throw NumericError("discriminator loss is not finite");
  d.backward(grad);
  return loss;
}

inline void require_batch(const char* op, const Tensor& f) {
  if (f.rank() != 2 || f.rows() == 0) throw ValidationError(std::string(op) + ": empty batch");
}

}  // namespace detail

/// -mean log D(f_t) - mean log(1 - D(f_s)). Gradients go to the discriminator only.
inline double instance_disc_loss(Discriminator& d_instance, const Tensor& f_target, const Tensor& f_source,
                                 double weight = 1.0) {
  detail::require_batch("instance_disc_loss", f_target);
  detail::require_batch("instance_disc_loss", f_source);
  if (f_target.rows() != f_source.rows()) {
    throw ShapeError("instance_disc_loss: target batch " + std::to_string(f_target.rows()) + " vs source batch " +
                     std::to_string(f_source.rows()));
  }
  return detail::real_fake_loss(d_instance, f_target, f_source, weight);
}

/// -log D(mean f_t) - log(1 - D(mean f_s)): one real and one fake term per batch.
inline double group_disc_loss(Discriminator& d_group, const Tensor& f_target, const Tensor& f_source, double weight = 1.0) {
  detail::require_batch("group_disc_loss", f_target);
  detail::require_batch("group_disc_loss", f_source);
  return detail::real_fake_loss(d_group, column_mean(f_target), column_mean(f_source), weight);
}

struct DiscLosses {
  double total = 0.0;
  double instance = 0.0;
  double group = 0.0;
};

/// lambda_di * L_DI + lambda_dg * L_DG in minimization form. A zero weight skips that term.
inline DiscLosses total_disc_loss(const AlignmentConfig& cfg, Discriminator& d_instance, Discriminator& d_group,
                                  const Tensor& f_target, const Tensor& f_source) {
  if (cfg.mode != AlignmentMode::adversarial) throw StateError("total_disc_loss requires adversarial alignment mode");
  cfg.validate();
  DiscLosses out;
  if (cfg.lambda_di != 0.0) out.instance = instance_disc_loss(d_instance, f_target, f_source, cfg.lambda_di);
  if (cfg.lambda_dg != 0.0) out.group = group_disc_loss(d_group, f_target, f_source, cfg.lambda_dg);
  out.total = cfg.lambda_di * out.instance + cfg.lambda_dg * out.group;
  return out;
}

struct AlignmentLoss {
  double loss = 0.0;
  Tensor grad_features;  // dL/df_s, b x f
};

/// Non-saturating fooling objective for the generator:
/// -lambda_di * mean log D_I(f_s) - lambda_dg * log D_G(mean f_s).
/// Discriminator parameters and their gradient buffers are not modified.
inline AlignmentLoss generator_alignment_loss(const AlignmentConfig& cfg, Discriminator& d_instance,
                                              Discriminator& d_group, const Tensor& f_source) {
  if (cfg.mode != AlignmentMode::adversarial) throw StateError("generator_alignment_loss requires adversarial alignment mode");
  detail::require_batch("generator_alignment_loss", f_source);
  const std::size_t b = f_source.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  AlignmentLoss out{0.0, Tensor(f_source.shape())};

  if (cfg.lambda_di != 0.0) {
    const Tensor z = d_instance.forward(f_source);
    Tensor gz(z.shape());
    double l = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      l += neg_log_sigmoid(z[i]);
      gz[i] = cfg.lambda_di * (sigmoid(z[i]) - 1.0) * inv_b;
    }
    out.loss += cfg.lambda_di * l * inv_b;
    const Tensor gf = d_instance.backward_input(gz);
    for (std::size_t i = 0; i < gf.size(); ++i) out.grad_features[i] += gf[i];
  }
  if (cfg.lambda_dg != 0.0) {
    const Tensor z = d_group.forward(column_mean(f_source));
    out.loss += cfg.lambda_dg * neg_log_sigmoid(z[0]);
    Tensor gz({1, 1}, cfg.lambda_dg * (sigmoid(z[0]) - 1.0));
    const Tensor gmean = d_group.backward_input(gz);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < f_source.cols(); ++j) out.grad_features(i, j) += gmean(0, j) * inv_b;
  }
  if (!std::isfinite(out.loss)) throw NumericError("generator alignment loss is not finite");
  return out;
}

/// ||mean f_t - mean f_s||^2 with the target mean held constant.
inline AlignmentLoss mse_alignment_loss(const Tensor& f_target, const Tensor& f_source) {
  detail::require_batch("mse_alignment_loss", f_target);
  detail::require_batch("mse_alignment_loss", f_source);
  if (f_target.cols() != f_source.cols()) {
    throw ShapeError("mse_alignment_loss: feature widths " + f_target.shape_string() + " vs " + f_source.shape_string());
  }
  const Tensor mt = column_mean(f_target);
  const Tensor ms = column_mean(f_source);
  const std::size_t b = f_source.rows();
  AlignmentLoss out{0.0, Tensor(f_source.shape())};
  for (std::size_t j = 0; j < mt.cols(); ++j) {
    const double diff = mt(0, j) - ms(0, j);
    out.loss += diff * diff;
    const double g = -2.0 * diff / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) out.grad_features(i, j) = g;
  }
  return out;
}

}  // namespace akt
