#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

/// Fully connected layer y = x W^T + b with accumulating gradient buffers.
struct AffineLayer {
  Tensor W;       // out_dim x in_dim
  Tensor b;       // out_dim
  Tensor grad_W;  // same shape as W
  Tensor grad_b;  // same shape as b
  std::optional<Tensor> cached_x;

  AffineLayer() = default;
  AffineLayer(std::size_t in_dim, std::size_t out_dim)
      : W({out_dim, in_dim}), b({out_dim}), grad_W({out_dim, in_dim}), grad_b({out_dim}) {}

  [[nodiscard]] std::size_t in_dim() const { return W.cols(); }
  [[nodiscard]] std::size_t out_dim() const { return W.rows(); }

  void zero_grad() {
    grad_W.fill(0.0);
    grad_b.fill(0.0);
  }
};

inline Tensor affine_forward(const Tensor& x, AffineLayer& layer) {
  if (x.rank() != 2 || x.cols() != layer.in_dim()) {
    throw ShapeError("affine_forward: input shape " + x.shape_string() + " does not match weight shape " +
                     layer.W.shape_string());
  }
  const std::size_t batch = x.rows();
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  Tensor y({batch, out});
  for (std::size_t i = 0; i < batch; ++i) {
    const auto xi = x.row(i);
    for (std::size_t o = 0; o < out; ++o) {
      const auto wo = layer.W.row(o);
      double acc = layer.b[o];
      for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xi[k];
      y(i, o) = acc;
    }
  }
  layer.cached_x = x;
  return y;
}

namespace fault_injection {

/// Fault injection for the gradient checker's own tests: the weight gradient accumulated by
/// affine_backward is scaled by this factor. Leave at 1 outside those tests.
inline double& affine_weight_grad_scale() {
  static double scale = 1.0;
  return scale;
}

}  // namespace fault_injection

/// Accumulates dL/dW and dL/db into the layer and returns dL/dx for the cached input.
inline Tensor affine_backward(const Tensor& grad_y, AffineLayer& layer) {
  if (!layer.cached_x) throw StateError("affine_backward called before affine_forward");
  const Tensor& x = *layer.cached_x;
  if (grad_y.rank() != 2 || grad_y.rows() != x.rows() || grad_y.cols() != layer.out_dim()) {
    throw ShapeError("affine_backward: upstream gradient shape " + grad_y.shape_string() + " does not match output shape [" +
                     std::to_string(x.rows()) + "x" + std::to_string(layer.out_dim()) + "]");
  }
  const std::size_t batch = x.rows();
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  const double fault = fault_injection::affine_weight_grad_scale();
  Tensor grad_x({batch, in});
  for (std::size_t i = 0; i < batch; ++i) {
    const auto xi = x.row(i);
    auto gxi = grad_x.row(i);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = grad_y(i, o);
      if (g == 0.0) continue;
      const double gwf = fault == 1.0 ? g : g * fault;
      auto gw = layer.grad_W.row(o);
      const auto wo = layer.W.row(o);
      for (std::size_t k = 0; k < in; ++k) {
        gw[k] += gwf * xi[k];
        gxi[k] += g * wo[k];
      }
      layer.grad_b[o] += g;
    }
  }
  return grad_x;
}

}  // namespace akt
