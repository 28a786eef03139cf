#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "akt/error.hpp"
#include "akt/rng.hpp"
#include "akt/tensor.hpp"

namespace akt {

/// Target-domain samples with one-hot (or multi-hot) labels.
struct LabeledDataset {
  Tensor X;  // n x d
  Tensor Y;  // n x c
  std::size_t class_count = 0;
  std::string name;

  [[nodiscard]] std::size_t size() const { return X.empty() ? 0 : X.rows(); }
  [[nodiscard]] std::size_t dim() const { return X.empty() ? 0 : X.cols(); }

  void validate(bool multiclass = true) const {
    if (X.empty() || Y.empty()) throw ValidationError("dataset '" + name + "' is empty");
    if (X.rows() != Y.rows()) throw ShapeError("dataset '" + name + "': X and Y row counts differ");
    if (Y.cols() != class_count) throw ShapeError("dataset '" + name + "': label width differs from class count");
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      double sum = 0.0;
      for (double v : Y.row(i)) {
        if (v != 0.0 && v != 1.0) throw ValidationError("dataset '" + name + "': labels must be 0/1");
        sum += v;
      }
      if (multiclass && sum != 1.0) throw ValidationError("dataset '" + name + "': row " + std::to_string(i) + " is not one-hot");
    }
  }
};

/// Source-domain samples. Carries no labels; see SourceDiagnostics.
struct UnlabeledDataset {
  Tensor X;  // m x d
  std::string name;

  [[nodiscard]] std::size_t size() const { return X.empty() ? 0 : X.rows(); }
  [[nodiscard]] std::size_t dim() const { return X.empty() ? 0 : X.cols(); }
};

/// Held-out true classes of the source samples. Only evaluation code takes this type;
/// nothing on the training path accepts it.
struct SourceDiagnostics {
  std::vector<std::size_t> source_class;      // one entry per source sample
  std::size_t source_class_count = 0;
  std::vector<std::optional<std::size_t>> target_for_source;  // which target class counts as correct
};

inline Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor y({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ValidationError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(classes) + " classes");
    y(i, labels[i]) = 1.0;
  }
  return y;
}

// ---------------------------------------------------------------- IDX files

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

/// Raw contents of an IDX file of unsigned bytes.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError(ParseError::Kind::truncated, offset, "IDX header truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace detail

/// Decodes an IDX byte buffer with the expected magic (0x803 images, 0x801 labels).
inline IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "IDX magic 0x%08X, expected 0x%08X", magic, expected_magic);
    throw ParseError(ParseError::Kind::bad_magic, 0, buf);
  }
  const std::size_t rank = magic & 0xFF;
  IdxArray out;
  std::size_t offset = 4;
  std::uint64_t count = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::uint32_t d = detail::read_be32(bytes, offset);
    if (d == 0) throw ParseError(ParseError::Kind::malformed, offset, "IDX dimension is zero");
    if (count > std::numeric_limits<std::uint64_t>::max() / d || count * d > std::numeric_limits<std::size_t>::max() / 2) {
      throw ParseError(ParseError::Kind::dimension_overflow, offset, "IDX dimensions overflow");
    }
    count *= d;
    out.dims.push_back(d);
    offset += 4;
  }
  if (bytes.size() - offset < count) {
    throw ParseError(ParseError::Kind::truncated, bytes.size(),
                     "IDX payload truncated: need " + std::to_string(count) + " bytes after header, have " +
                         std::to_string(bytes.size() - offset));
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(offset + count));
  return out;
}

inline std::vector<std::uint8_t> encode_idx(const IdxArray& arr, std::uint32_t magic) {
  std::vector<std::uint8_t> out;
  detail::write_be32(out, magic);
  for (auto d : arr.dims) detail::write_be32(out, d);
  out.insert(out.end(), arr.payload.begin(), arr.payload.end());
  return out;
}

inline void write_idx_images(const std::string& path, std::uint32_t rows, std::uint32_t cols,
                             const std::vector<std::uint8_t>& pixels) {
  if (rows == 0 || cols == 0 || pixels.size() % (std::size_t{rows} * cols) != 0) {
    throw ShapeError("write_idx_images: pixel count not a multiple of rows*cols");
  }
  const auto n = static_cast<std::uint32_t>(pixels.size() / (std::size_t{rows} * cols));
  detail::write_file(path, encode_idx({{n, rows, cols}, pixels}, idx_images_magic));
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  detail::write_file(path, encode_idx({{static_cast<std::uint32_t>(labels.size())}, labels}, idx_labels_magic));
}

struct IdxLoadOptions {
  std::optional<std::size_t> limit;       // keep the first k records
  std::size_t num_classes = 0;            // 0: infer as max label + 1
  std::size_t label_offset = 0;           // subtracted from every raw label (EMNIST letters start at 1)
};

/// Reads an IDX image file (and optionally its label file). Pixels are scaled by 1/255.
inline std::variant<LabeledDataset, UnlabeledDataset> load_idx(const std::string& images_path,
                                                               const std::optional<std::string>& labels_path,
                                                               const IdxLoadOptions& opts = {}) {
  const IdxArray images = parse_idx(detail::read_file(images_path), idx_images_magic);
  if (images.dims.size() != 3) throw ParseError(ParseError::Kind::malformed, 3, "IDX image file must be rank 3");
  std::size_t n = images.dims[0];
  const std::size_t d = std::size_t{images.dims[1]} * images.dims[2];
  if (opts.limit) n = std::min(n, *opts.limit);
  if (n == 0) throw ValidationError("load_idx: no records selected");

  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n * d; ++i) x[i] = static_cast<double>(images.payload[i]) / 255.0;
  Tensor X({n, d}, std::move(x));

  if (!labels_path) return UnlabeledDataset{std::move(X), images_path};

  const IdxArray labels = parse_idx(detail::read_file(*labels_path), idx_labels_magic);
  if (labels.dims.size() != 1) throw ParseError(ParseError::Kind::malformed, 3, "IDX label file must be rank 1");
  if (labels.dims[0] != images.dims[0]) {
    throw ValidationError("load_idx: image count " + std::to_string(images.dims[0]) + " differs from label count " +
                          std::to_string(labels.dims[0]));
  }
  std::vector<std::size_t> y(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels.payload[i] < opts.label_offset) throw ValidationError("load_idx: label below label_offset at record " + std::to_string(i));
    y[i] = labels.payload[i] - opts.label_offset;
    max_label = std::max(max_label, y[i]);
  }
  const std::size_t classes = opts.num_classes ? opts.num_classes : max_label + 1;
  LabeledDataset ds{std::move(X), one_hot(y, classes), classes, images_path};
  return ds;
}

// ------------------------------------------------------- synthetic task

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t dims = 16;
  std::size_t target_classes = 4;
  std::size_t source_classes = 8;
  std::size_t target_train_per_class = 50;
  std::size_t target_test_per_class = 250;
  std::size_t source_samples = 2000;
  double separation = 3.0;  // radius of the sphere carrying the class means
  double noise = 1.0;       // isotropic Gaussian standard deviation
  /// Distance from each source mean to its parent target mean, as a fraction of the radius.
  /// Zero or negative places source means independently on the sphere.
  double source_offset = 0.3;
};

struct SyntheticTask {
  LabeledDataset target_train;
  LabeledDataset target_test;
  UnlabeledDataset source;
  SourceDiagnostics diagnostics;
  Tensor class_means;  // (target_classes + source_classes) x dims; target means first
};

/// Gaussian clusters whose means sit on a sphere. Target and source classes are disjoint
/// clusters of one family; each source class is declared to correspond to its nearest
/// target mean for diagnostics.
inline SyntheticTask make_synthetic_transfer_task(const SyntheticSpec& spec) {
  if (spec.dims == 0 || spec.target_classes < 2 || spec.source_classes == 0) throw ValidationError("synthetic: bad class/dim counts");
  if (!(spec.separation > 0.0) || !(spec.noise > 0.0)) throw ValidationError("synthetic: separation and noise must be positive");
  if (spec.target_train_per_class == 0 || spec.target_test_per_class == 0 || spec.source_samples == 0) {
    throw ValidationError("synthetic: sample counts must be positive");
  }
  const std::size_t total = spec.target_classes + spec.source_classes;
  const std::size_t d = spec.dims;
  Rng mean_rng = Rng::stream(spec.seed, 100);
  Tensor means({total, d});
  auto random_unit = [&](std::vector<double>& v) {
    double norm = 0.0;
    for (auto& x : v) {
      x = mean_rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  };
  auto far_enough = [&](const std::vector<double>& v, std::size_t placed, double min_dist) {
    for (std::size_t j = 0; j < placed; ++j) {
      double dist2 = 0.0;
      for (std::size_t t = 0; t < d; ++t) dist2 += (v[t] - means(j, t)) * (v[t] - means(j, t));
      if (std::sqrt(dist2) < min_dist) return false;
    }
    return true;
  };
  constexpr int max_attempts = 10000;
  for (std::size_t k = 0; k < total; ++k) {
    const bool is_source = k >= spec.target_classes;
    const bool offset_mode = is_source && spec.source_offset > 0.0;
    // Target means are pairwise at least one radius apart. A source mean sits at the requested
    // offset from its parent target mean and must stay clear of every other mean.
    const double min_dist = offset_mode ? 0.5 * spec.source_offset * spec.separation : spec.separation;
    std::vector<double> v(d);
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == max_attempts) {
        throw ValidationError("synthetic: could not place " + std::to_string(total) + " separated class means in " +
                              std::to_string(d) + " dimensions");
      }
      random_unit(v);
      if (offset_mode) {
        const std::size_t parent = (k - spec.target_classes) % spec.target_classes;
        // Rotate the parent mean by the angle whose chord equals source_offset * radius.
        std::vector<double> pm(means.row(parent).begin(), means.row(parent).end());
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += v[t] * pm[t] / spec.separation;
        double norm = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          v[t] -= dot * pm[t] / spec.separation;
          norm += v[t] * v[t];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) continue;
        const double chord = std::min(spec.source_offset, 2.0);
        const double angle = 2.0 * std::asin(chord / 2.0);
        for (std::size_t t = 0; t < d; ++t) {
          v[t] = std::cos(angle) * pm[t] + std::sin(angle) * spec.separation * v[t] / norm;
        }
        bool clear = true;
        for (std::size_t j = 0; j < k && clear; ++j) {
          if (j == parent) continue;
          double dist2 = 0.0;
          for (std::size_t t = 0; t < d; ++t) dist2 += (v[t] - means(j, t)) * (v[t] - means(j, t));
          clear = std::sqrt(dist2) >= min_dist;
        }
        if (!clear) continue;
      } else {
        for (auto& x : v) x *= spec.separation;
        if (!far_enough(v, k, min_dist)) continue;
      }
      std::copy(v.begin(), v.end(), means.row(k).begin());
      break;
    }
  }

  auto sample = [&](Rng& rng, std::size_t cls, std::span<double> out) {
    for (std::size_t t = 0; t < d; ++t) out[t] = means(cls, t) + spec.noise * rng.normal();
  };
  auto make_target = [&](std::size_t per_class, std::uint64_t stream, const char* name) {
    Rng rng = Rng::stream(spec.seed, stream);
    const std::size_t n = per_class * spec.target_classes;
    Tensor X({n, d});
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i % spec.target_classes;
      sample(rng, y[i], X.row(i));
    }
    return LabeledDataset{std::move(X), one_hot(y, spec.target_classes), spec.target_classes, name};
  };

  SyntheticTask task;
  task.target_train = make_target(spec.target_train_per_class, 101, "synthetic-target-train");
  task.target_test = make_target(spec.target_test_per_class, 102, "synthetic-target-test");

  Rng src_rng = Rng::stream(spec.seed, 103);
  Tensor XS({spec.source_samples, d});
  task.diagnostics.source_class.resize(spec.source_samples);
  task.diagnostics.source_class_count = spec.source_classes;
  for (std::size_t i = 0; i < spec.source_samples; ++i) {
    const std::size_t s = i % spec.source_classes;
    task.diagnostics.source_class[i] = s;
    sample(src_rng, spec.target_classes + s, XS.row(i));
  }
  task.source = UnlabeledDataset{std::move(XS), "synthetic-source"};

  for (std::size_t s = 0; s < spec.source_classes; ++s) {
    if (spec.source_offset > 0.0) {
      task.diagnostics.target_for_source.emplace_back(s % spec.target_classes);
      continue;
    }
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < spec.target_classes; ++t) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = means(spec.target_classes + s, k) - means(t, k);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = t;
      }
    }
    task.diagnostics.target_for_source.emplace_back(best);
  }
  task.class_means = std::move(means);
  return task;
}

// ------------------------------------------------------------- batching

struct Batch {
  Tensor X;
  std::optional<Tensor> Y;
  std::vector<std::size_t> indices;
};

/// Seeded drop-last batching over a fixed dataset.
///
/// An epoch-bound stream returns std::nullopt once the epoch's full batches are used up and
/// reshuffles on the following call. A cycling stream reshuffles silently and never ends.
class BatchStream {
public:
  BatchStream(const Tensor& X, const Tensor* Y, std::size_t batch_size, Rng rng, bool cycling)
      : X_(&X), Y_(Y), batch_size_(batch_size), rng_(std::move(rng)), cycling_(cycling) {
    if (X.empty()) throw ValidationError("BatchStream: dataset is empty");
    if (batch_size == 0) throw ValidationError("BatchStream: batch size must be positive");
    if (batch_size > X.rows()) {
      throw ValidationError("BatchStream: batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                            std::to_string(X.rows()));
    }
    order_.resize(X.rows());
    reshuffle();
  }

  [[nodiscard]] std::size_t batches_per_epoch() const { return X_->rows() / batch_size_; }
  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

  std::optional<std::vector<std::size_t>> next_indices() {
    if (cursor_ + batch_size_ > order_.size()) {
      if (!cycling_ && !exhausted_) {
        exhausted_ = true;
        return std::nullopt;
      }
      exhausted_ = false;
      ++epoch_;
      reshuffle();
    }
    std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    return idx;
  }

  std::optional<Batch> next() {
    auto idx = next_indices();
    if (!idx) return std::nullopt;
    Batch b{X_->gather_rows(*idx), std::nullopt, std::move(*idx)};
    if (Y_) b.Y = Y_->gather_rows(b.indices);
    return b;
  }

  /// Like next(), but an exhausted epoch-bound stream is an error.
  Batch require_next(const char* what) {
    auto b = next();
    if (!b) throw StreamError(std::string("batch stream exhausted: ") + what);
    return std::move(*b);
  }

private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i-- > 1;) std::swap(order_[i], order_[rng_.below(i + 1)]);
    cursor_ = 0;
  }

  const Tensor* X_;
  const Tensor* Y_;
  std::size_t batch_size_;
  Rng rng_;
  bool cycling_;
  bool exhausted_ = false;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

inline std::optional<Batch> batch_iterator(BatchStream& stream) { return stream.next(); }

}  // namespace akt
