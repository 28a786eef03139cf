#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "akt/error.hpp"

namespace akt {

/// Dense rank-1 or rank-2 array of doubles in row-major order.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(count(shape_), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (count(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }

  /// Builds a rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows in Tensor::matrix");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor from_vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return shape_.empty(); }

  [[nodiscard]] std::size_t rows() const {
    require_rank2("rows");
    return shape_[0];
  }
  [[nodiscard]] std::size_t cols() const {
    require_rank2("cols");
    return shape_[1];
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& storage() const noexcept { return data_; }

  [[nodiscard]] std::span<double> row(std::size_t r) {
    require_rank2("row");
    return {data_.data() + r * shape_[1], shape_[1]};
  }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    require_rank2("row");
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Gathers the listed rows into a new rank-2 tensor.
  [[nodiscard]] Tensor gather_rows(std::span<const std::size_t> indices) const {
    require_rank2("gather_rows");
    Tensor out({indices.size(), shape_[1]});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= shape_[0]) throw ShapeError("gather_rows: row index out of range");
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * shape_[1]), shape_[1],
                  out.data_.begin() + static_cast<std::ptrdiff_t>(i * shape_[1]));
    }
    return out;
  }

  [[nodiscard]] std::string shape_string() const { return shape_string(shape_); }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static void check_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 2) throw ShapeError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }

  void require_rank2(const char* what) const {
    if (shape_.size() != 2) throw ShapeError(std::string(what) + " requires a rank-2 tensor, got " + shape_string());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Bitwise equality of the payloads (distinguishes -0.0 from 0.0 and NaN payloads).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto av = a.values();
  const auto bv = b.values();
  return std::equal(av.begin(), av.end(), bv.begin(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

/// Column means of a b x f tensor, returned as a 1 x f tensor.
inline Tensor column_mean(const Tensor& x) {
  const std::size_t b = x.rows();
  const std::size_t f = x.cols();
  Tensor out({1, f});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) out(0, j) += x(i, j);
  for (std::size_t j = 0; j < f; ++j) out(0, j) /= static_cast<double>(b);
  return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace akt
