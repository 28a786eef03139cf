#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "akt/error.hpp"
#include "akt/kernel/activation.hpp"
#include "akt/kernel/affine.hpp"
#include "akt/kernel/sgd.hpp"
#include "akt/rng.hpp"
#include "akt/tensor.hpp"

namespace akt {

enum class TaskKind { multiclass, multilabel };

inline const char* to_string(TaskKind k) { return k == TaskKind::multiclass ? "multiclass" : "multilabel"; }

/// Shape of the classifier M and the pseudo-label generator G. Both are always built from
/// the same spec so their feature taps live in the same space.
struct MLPSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256, 128};
  std::size_t num_classes = 2;
  TaskKind task_kind = TaskKind::multiclass;
  /// Hidden layer whose post-ReLU activation is the feature; -1 selects the last one.
  /// The head reads directly from this layer, so layers past it are not instantiated.
  int feature_tap = -1;

  [[nodiscard]] std::size_t tap_index() const {
    return feature_tap < 0 ? hidden_dims.size() - 1 : static_cast<std::size_t>(feature_tap);
  }
  [[nodiscard]] std::size_t feature_dim() const { return hidden_dims.at(tap_index()); }

  void validate() const {
    if (input_dim == 0) throw ValidationError("MLPSpec: input_dim must be positive");
    if (hidden_dims.empty()) throw ValidationError("MLPSpec: hidden_dims must be nonempty");
    for (auto h : hidden_dims)
      if (h == 0) throw ValidationError("MLPSpec: hidden layer widths must be positive");
    if (task_kind == TaskKind::multiclass && num_classes < 2) throw ValidationError("MLPSpec: multiclass needs at least 2 classes");
    if (num_classes == 0) throw ValidationError("MLPSpec: num_classes must be positive");
    if (feature_tap < -1 || (feature_tap >= 0 && static_cast<std::size_t>(feature_tap) >= hidden_dims.size())) {
      throw ValidationError("MLPSpec: feature_tap must index a hidden layer, got " + std::to_string(feature_tap));
    }
  }

  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

/// Glorot-uniform weights, zero biases, drawn in layer order and row-major within a layer.
inline void glorot_init(AffineLayer& layer, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
  for (double& w : layer.W.values()) w = rng.uniform(-limit, limit);
  layer.b.fill(0.0);
  layer.zero_grad();
}

/// Stack of ReLU affine layers. Shared by the MLP trunk and the discriminators.
class ReluStack {
public:
  ReluStack() = default;
  ReluStack(std::size_t input_dim, const std::vector<std::size_t>& widths) {
    std::size_t in = input_dim;
    for (auto w : widths) {
      layers_.emplace_back(in, w);
      in = w;
    }
  }

  Tensor forward(const Tensor& x) {
    masks_.clear();
    Tensor h = x;
    for (auto& layer : layers_) {
      auto r = relu(affine_forward(h, layer));
      masks_.push_back(std::move(r.mask));
      h = std::move(r.y);
    }
    return h;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Tensor backward(const Tensor& grad_out) {
    if (masks_.size() != layers_.size()) throw StateError("ReluStack::backward called before forward");
    Tensor g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) g = affine_backward(relu_backward(g, masks_[k]), layers_[k]);
    return g;
  }

  /// dL/dx only; parameter gradient buffers are left untouched.
  Tensor backward_input(const Tensor& grad_out) const {
    if (masks_.size() != layers_.size()) throw StateError("ReluStack::backward_input called before forward");
    Tensor g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) g = affine_input_grad(relu_backward(g, masks_[k]), layers_[k]);
    return g;
  }

  void init(Rng& rng) {
    for (auto& l : layers_) glorot_init(l, rng);
  }

  void append_params(std::vector<ParamRef>& out, const std::string& prefix) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      out.push_back({prefix + std::to_string(k) + ".W", &layers_[k].W, &layers_[k].grad_W});
      out.push_back({prefix + std::to_string(k) + ".b", &layers_[k].b, &layers_[k].grad_b});
    }
  }

  [[nodiscard]] std::vector<AffineLayer>& layers() noexcept { return layers_; }
  [[nodiscard]] const std::vector<AffineLayer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::size_t output_dim(std::size_t input_dim) const {
    return layers_.empty() ? input_dim : layers_.back().out_dim();
  }

  static Tensor affine_input_grad(const Tensor& grad_y, const AffineLayer& layer) {
    if (grad_y.rank() != 2 || grad_y.cols() != layer.out_dim()) {
      throw ShapeError("affine input gradient: upstream shape " + grad_y.shape_string() + " vs weight shape " +
                       layer.W.shape_string());
    }
    Tensor gx({grad_y.rows(), layer.in_dim()});
    for (std::size_t i = 0; i < grad_y.rows(); ++i) {
      auto gxi = gx.row(i);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const double g = grad_y(i, o);
        if (g == 0.0) continue;
        const auto wo = layer.W.row(o);
        for (std::size_t k = 0; k < layer.in_dim(); ++k) gxi[k] += g * wo[k];
      }
    }
    return gx;
  }

private:
  std::vector<AffineLayer> layers_;
  std::vector<Tensor> masks_;
};

struct ForwardResult {
  Tensor feature;  // b x feature_dim, post-activation output of the tap layer
  Tensor logits;   // b x num_classes
};

/// Classifier-shaped network: ReLU trunk up to the feature tap plus a linear classification head.
class MLP {
public:
  MLP() = default;
  explicit MLP(const MLPSpec& spec) : spec_(spec) {
    spec_.validate();
    const std::vector<std::size_t> widths(spec_.hidden_dims.begin(),
                                          spec_.hidden_dims.begin() + static_cast<std::ptrdiff_t>(spec_.tap_index() + 1));
    trunk_ = ReluStack(spec_.input_dim, widths);
    head_ = AffineLayer(spec_.feature_dim(), spec_.num_classes);
  }

  [[nodiscard]] const MLPSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] ReluStack& trunk() noexcept { return trunk_; }
  [[nodiscard]] const ReluStack& trunk() const noexcept { return trunk_; }
  [[nodiscard]] AffineLayer& head() noexcept { return head_; }
  [[nodiscard]] const AffineLayer& head() const noexcept { return head_; }

  ForwardResult forward(const Tensor& x) {
    if (x.rank() != 2 || x.cols() != spec_.input_dim) {
      throw ShapeError("MLP forward: input shape " + x.shape_string() + " but input_dim is " + std::to_string(spec_.input_dim));
    }
    Tensor feature = trunk_.forward(x);
    Tensor logits = affine_forward(feature, head_);
    return {std::move(feature), std::move(logits)};
  }

  /// Backpropagates through head and trunk; grad_feature (if nonempty) is added at the tap.
  Tensor backward(const Tensor& grad_logits, const Tensor& grad_feature = Tensor{}) {
    Tensor g = affine_backward(grad_logits, head_);
    if (!grad_feature.empty()) {
      if (grad_feature.shape() != g.shape()) throw ShapeError("MLP backward: feature gradient shape " + grad_feature.shape_string());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_feature[i];
    }
    return trunk_.backward(g);
  }

  /// Backpropagates a gradient that enters at the tap only; the head is not touched.
  Tensor backward_from_feature(const Tensor& grad_feature) { return trunk_.backward(grad_feature); }

  [[nodiscard]] std::vector<ParamRef> params(bool include_head = true) {
    std::vector<ParamRef> out;
    trunk_.append_params(out, "hidden");
    if (include_head) {
      out.push_back({"head.W", &head_.W, &head_.grad_W});
      out.push_back({"head.b", &head_.b, &head_.grad_b});
    }
    return out;
  }

  void zero_grad() {
    for (auto& l : trunk_.layers()) l.zero_grad();
    head_.zero_grad();
  }

private:
  MLPSpec spec_;
  ReluStack trunk_;
  AffineLayer head_;
};

inline MLP init_mlp(const MLPSpec& spec, std::uint64_t seed) {
  MLP net(spec);
  Rng rng(seed);
  net.trunk().init(rng);
  glorot_init(net.head(), rng);
  return net;
}

inline ForwardResult forward_with_feature_tap(MLP& net, const Tensor& x) { return net.forward(x); }

/// Overwrites dst's classification head with src's. Trunk layers of dst are not touched.
inline void copy_classifier_head(const MLP& src, MLP& dst) {
  if (!(src.spec() == dst.spec())) throw ValidationError("copy_classifier_head: networks were built from different specs");
  dst.head().W = src.head().W;
  dst.head().b = src.head().b;
}

/// Hard labels from raw logits: argmax one-hot (ties to the lowest index) or sigmoid >= 0.5 multi-hot.
inline Tensor hard_labels(const Tensor& logits, TaskKind kind) {
  Tensor labels(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    auto y = labels.row(i);
    if (kind == TaskKind::multiclass) {
      y[argmax(z)] = 1.0;
    } else {
      // sigmoid(z) >= 0.5 exactly when z >= 0
      for (std::size_t j = 0; j < z.size(); ++j) y[j] = z[j] >= 0.0 ? 1.0 : 0.0;
    }
  }
  return labels;
}

/// Pseudo-labels for source inputs from G's (copied) head. The result is a plain tensor
/// with no backward path.
inline Tensor predict_pseudo_labels(MLP& generator, const Tensor& x_source, TaskKind kind) {
  return hard_labels(generator.forward(x_source).logits, kind);
}

}  // namespace akt
