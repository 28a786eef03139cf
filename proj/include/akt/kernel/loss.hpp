#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits, same shape as the logits
};

namespace detail {

inline void require_same_shape(const char* op, const Tensor& logits, const Tensor& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape()) {
    throw ShapeError(std::string(op) + ": logits shape " + logits.shape_string() + " vs targets shape " +
                     targets.shape_string());
  }
}

inline void require_finite(const char* op, const Tensor& logits) {
  if (!logits.all_finite()) throw NumericError(std::string(op) + ": non-finite logits");
}

}  // namespace detail

/// log(1 + exp(-|z|)) + max(z, 0) - z t, the overflow-free binary cross-entropy on a logit.
inline double stable_bce(double z, double t) { return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))); }

/// -log(sigmoid(z)) without overflow.
inline double neg_log_sigmoid(double z) { return stable_bce(z, 1.0); }

/// -log(1 - sigmoid(z)) without overflow.
inline double neg_log_one_minus_sigmoid(double z) { return stable_bce(z, 0.0); }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logsumexp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Batch-averaged categorical cross-entropy of one-hot targets against raw logits.
inline LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& onehot) {
  detail::require_same_shape("softmax_cross_entropy", logits, onehot);
  detail::require_finite("softmax_cross_entropy", logits);
  const std::size_t b = logits.rows();
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < b; ++i) {
    double sum = 0.0;
    for (double t : onehot.row(i)) {
      if (t != 0.0 && t != 1.0) throw ValidationError("softmax_cross_entropy: row " + std::to_string(i) + " is not one-hot");
      sum += t;
    }
    if (sum != 1.0) throw ValidationError("softmax_cross_entropy: row " + std::to_string(i) + " is not one-hot");
  }
  LossResult r{0.0, Tensor({b, c})};
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto z = logits.row(i);
    const auto t = onehot.row(i);
    const double lse = logsumexp(z);
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += z[j] * t[j];
    r.loss += lse - dot;
    auto g = r.grad.row(i);
    for (std::size_t j = 0; j < c; ++j) g[j] = (std::exp(z[j] - lse) - t[j]) * inv_b;
  }
  r.loss *= inv_b;
  return r;
}

/// Mean over all entries of elementwise binary cross-entropy on raw logits.
inline LossResult sigmoid_bce(const Tensor& logits, const Tensor& targets) {
  detail::require_same_shape("sigmoid_bce", logits, targets);
  detail::require_finite("sigmoid_bce", logits);
  const auto tv = targets.values();
  for (std::size_t i = 0; i < tv.size(); ++i) {
    if (!(tv[i] >= 0.0 && tv[i] <= 1.0)) throw ValidationError("sigmoid_bce: target entry " + std::to_string(i) + " outside [0,1]");
  }
  LossResult r{0.0, Tensor(logits.shape())};
  const auto zv = logits.values();
  auto gv = r.grad.values();
  const double inv_n = 1.0 / static_cast<double>(zv.size());
  for (std::size_t i = 0; i < zv.size(); ++i) {
    r.loss += stable_bce(zv[i], tv[i]);
    gv[i] = (sigmoid(zv[i]) - tv[i]) * inv_n;
  }
  r.loss *= inv_n;
  return r;
}

}  // namespace akt
