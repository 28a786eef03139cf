#pragma once

#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

struct ReluResult {
  Tensor y;
  Tensor mask;  // 1 where x > 0, else 0 (the subgradient at 0 is taken as 0)
};

inline ReluResult relu(const Tensor& x) {
  ReluResult r{x, Tensor(x.shape())};
  auto yv = r.y.values();
  auto mv = r.mask.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    if (yv[i] > 0.0) {
      mv[i] = 1.0;
    } else {
      yv[i] = 0.0;
    }
  }
  return r;
}

inline Tensor relu_backward(const Tensor& grad_y, const Tensor& mask) {
  if (grad_y.shape() != mask.shape()) {
    throw ShapeError("relu_backward: gradient shape " + grad_y.shape_string() + " vs mask shape " + mask.shape_string());
  }
  Tensor g(grad_y.shape());
  auto gv = g.values();
  const auto uv = grad_y.values();
  const auto mv = mask.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = mv[i] != 0.0 ? uv[i] : 0.0;
  return g;
}

}  // namespace akt
