#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "akt/kernel/sgd.hpp"
#include "akt/tensor.hpp"

namespace akt {

/// Evaluates the loss and writes its gradient into the grad buffers of the checked
/// parameters. grad_check zeroes the buffers before every call.
using LossFn = std::function<double()>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

/// Compares the analytic gradient against central differences coordinate by coordinate.
inline GradCheckReport grad_check_report(const LossFn& loss_fn, std::span<const ParamRef> params, double h) {
  zero_grads(params);
  loss_fn();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].value->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      zero_grads(params);
      const double f_plus = loss_fn();
      values[i] = saved - h;
      zero_grads(params);
      const double f_minus = loss_fn();
      values[i] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[k][i];
      const double err = relative_error(a, numeric);
      ++report.coordinates;
      if (report.coordinates == 1 || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = params[k].name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  zero_grads(params);
  loss_fn();
  return report;
}

inline double grad_check(const LossFn& loss_fn, std::span<const ParamRef> params, double h) {
  return grad_check_report(loss_fn, params, h).max_relative_error;
}

}  // namespace akt
