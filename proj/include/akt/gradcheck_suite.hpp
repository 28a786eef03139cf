#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "akt/alignment.hpp"
#include "akt/kernel/grad_check.hpp"
#include "akt/kernel/loss.hpp"
#include "akt/networks.hpp"
#include "akt/rng.hpp"
#include "akt/trainer.hpp"

namespace akt {

inline constexpr double gradcheck_tolerance = 1e-6;
inline constexpr double gradcheck_step = 1e-5;

struct GradCheckEntry {
  std::string name;
  GradCheckReport report;
  [[nodiscard]] bool passed() const { return report.max_relative_error <= gradcheck_tolerance; }
};

namespace detail {

inline Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t({r, c});
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_one_hot(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (std::size_t i = 0; i < r; ++i) t(i, rng.below(c)) = 1.0;
  return t;
}

/// Smallest |pre-activation| over every ReLU layer for input x. Finite differences are only
/// trusted when this stays well above the step size.
inline double kink_margin(const ReluStack& stack, const Tensor& x) {
  double margin = std::numeric_limits<double>::infinity();
  Tensor h = x;
  for (const auto& layer : stack.layers()) {
    AffineLayer copy = layer;
    Tensor z = affine_forward(h, copy);
    for (double v : z.values()) margin = std::min(margin, std::abs(v));
    h = relu(z).y;
  }
  return margin;
}

inline constexpr double kink_clearance = 1e-3;

/// A fixture: builds networks and data from rng, and reports whether it is clear of ReLU kinks.
/// The suite redraws until it is.
template <typename Fixture>
Fixture draw_clear(std::uint64_t seed, const std::function<Fixture(Rng&)>& make, const std::function<bool(Fixture&)>& clear) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Fixture f = make(rng);
    if (clear(f)) return f;
  }
  throw NumericError("gradcheck: could not draw a fixture clear of ReLU kinks");
}

inline std::size_t small_batch(Rng& rng) { return 2 + rng.below(3); }  // 2..4 samples

inline MLP small_mlp(Rng& rng, std::size_t in, std::vector<std::size_t> hidden, std::size_t classes, TaskKind kind, int tap = -1) {
  MLPSpec spec;
  spec.input_dim = in;
  spec.hidden_dims = std::move(hidden);
  spec.num_classes = classes;
  spec.task_kind = kind;
  spec.feature_tap = tap;
  MLP net(spec);
  net.trunk().init(rng);
  glorot_init(net.head(), rng);
  // Nonzero biases so every parameter gets exercised.
  for (auto& l : net.trunk().layers())
    for (double& b : l.b.values()) b = rng.uniform(-0.2, 0.2);
  for (double& b : net.head().b.values()) b = rng.uniform(-0.2, 0.2);
  return net;
}

inline Discriminator small_disc(Rng& rng, std::size_t feature_dim) {
  Discriminator d(feature_dim, {5, 3});
  d.init(rng);
  for (auto& l : d.hidden().layers())
    for (double& b : l.b.values()) b = rng.uniform(-0.2, 0.2);
  d.output_layer().b[0] = rng.uniform(-0.2, 0.2);
  return d;
}

inline GradCheckReport run_check(const LossFn& fn, const std::vector<ParamRef>& params) {
  return grad_check_report(fn, params, gradcheck_step);
}

// ---------------------------------------------------------------- kernel ops

inline GradCheckReport check_affine(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = small_batch(rng);
  AffineLayer layer(5, 3);
  layer.W = random_tensor(rng, 3, 5);
  layer.b = Tensor::from_vector(random_tensor(rng, 1, 3).storage());
  Tensor x = random_tensor(rng, b, 5);
  Tensor gx(x.shape());
  const Tensor w = random_tensor(rng, b, 3);
  LossFn fn = [&] {
    const Tensor y = affine_forward(x, layer);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) loss += w[i] * y[i];
    const Tensor g = affine_backward(w, layer);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    return loss;
  };
  return run_check(fn, {{"W", &layer.W, &layer.grad_W}, {"b", &layer.b, &layer.grad_b}, {"x", &x, &gx}});
}

inline GradCheckReport check_relu(std::uint64_t seed) {
  struct F {
    Tensor x, gx, w;
  };
  F f = draw_clear<F>(
      seed,
      [](Rng& rng) {
        const std::size_t b = small_batch(rng);
        Tensor x = random_tensor(rng, b, 6);
        return F{x, Tensor(x.shape()), random_tensor(rng, b, 6)};
      },
      [](F& f) {
        for (double v : f.x.values())
          if (std::abs(v) < kink_clearance) return false;
        return true;
      });
  LossFn fn = [&] {
    const auto r = relu(f.x);
    double loss = 0.0;
    for (std::size_t i = 0; i < r.y.size(); ++i) loss += f.w[i] * r.y[i];
    const Tensor g = relu_backward(f.w, r.mask);
    for (std::size_t i = 0; i < g.size(); ++i) f.gx[i] += g[i];
    return loss;
  };
  return run_check(fn, {{"x", &f.x, &f.gx}});
}

inline GradCheckReport check_softmax_ce(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = small_batch(rng);
  Tensor z = random_tensor(rng, b, 4, -2.0, 2.0);
  Tensor gz(z.shape());
  const Tensor t = random_one_hot(rng, b, 4);
  LossFn fn = [&] {
    const auto r = softmax_cross_entropy(z, t);
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += r.grad[i];
    return r.loss;
  };
  return run_check(fn, {{"logits", &z, &gz}});
}

inline GradCheckReport check_sigmoid_bce(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = small_batch(rng);
  Tensor z = random_tensor(rng, b, 3, -3.0, 3.0);
  Tensor gz(z.shape());
  const Tensor t = random_tensor(rng, b, 3, 0.0, 1.0);
  LossFn fn = [&] {
    const auto r = sigmoid_bce(z, t);
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += r.grad[i];
    return r.loss;
  };
  return run_check(fn, {{"logits", &z, &gz}});
}

// ---------------------------------------------------------------- networks

struct NetFixture {
  MLP net;
  Tensor x, y;
};

inline GradCheckReport check_mlp(std::uint64_t seed, TaskKind kind, int tap) {
  NetFixture f = draw_clear<NetFixture>(
      seed,
      [&](Rng& rng) {
        const std::size_t b = small_batch(rng);
        MLP net = small_mlp(rng, 5, {6, 5, 4}, 3, kind, tap);
        Tensor x = random_tensor(rng, b, 5);
        Tensor y = random_one_hot(rng, b, 3);
        if (kind == TaskKind::multilabel)
          for (double& v : y.values()) v = rng.below(2) ? 1.0 : v;
        return NetFixture{std::move(net), std::move(x), std::move(y)};
      },
      [](NetFixture& f) { return kink_margin(f.net.trunk(), f.x) > kink_clearance; });
  LossFn fn = [&] {
    const auto r = classification_loss(f.net.forward(f.x).logits, f.y, kind);
    f.net.backward(r.grad);
    return r.loss;
  };
  return run_check(fn, f.net.params());
}

// ---------------------------------------------------------------- alignment losses

struct DiscFixture {
  Discriminator d_instance, d_group;
  Tensor f_t, f_s;
};

inline DiscFixture disc_fixture(std::uint64_t seed) {
  return draw_clear<DiscFixture>(
      seed,
      [](Rng& rng) {
        const std::size_t b = small_batch(rng);
        DiscFixture f{small_disc(rng, 4), small_disc(rng, 4), random_tensor(rng, b, 4, 0.0, 1.5), random_tensor(rng, b, 4, 0.0, 1.5)};
        return f;
      },
      [](DiscFixture& f) {
        return kink_margin(f.d_instance.hidden(), f.f_t) > kink_clearance &&
               kink_margin(f.d_instance.hidden(), f.f_s) > kink_clearance &&
               kink_margin(f.d_group.hidden(), column_mean(f.f_t)) > kink_clearance &&
               kink_margin(f.d_group.hidden(), column_mean(f.f_s)) > kink_clearance;
      });
}

inline GradCheckReport check_instance_disc(std::uint64_t seed) {
  DiscFixture f = disc_fixture(seed);
  LossFn fn = [&] { return instance_disc_loss(f.d_instance, f.f_t, f.f_s); };
  return run_check(fn, f.d_instance.params());
}

inline GradCheckReport check_group_disc(std::uint64_t seed) {
  DiscFixture f = disc_fixture(seed);
  LossFn fn = [&] { return group_disc_loss(f.d_group, f.f_t, f.f_s); };
  return run_check(fn, f.d_group.params());
}

inline GradCheckReport check_total_disc(std::uint64_t seed) {
  DiscFixture f = disc_fixture(seed);
  const AlignmentConfig cfg{0.7, 1.3, AlignmentMode::adversarial};
  std::vector<ParamRef> params = f.d_instance.params();
  for (auto& p : f.d_group.params()) params.push_back({"group." + p.name, p.value, p.grad});
  LossFn fn = [&] { return total_disc_loss(cfg, f.d_instance, f.d_group, f.f_t, f.f_s).total; };
  return run_check(fn, params);
}

struct GeneratorFixture {
  MLP generator;
  Discriminator d_instance, d_group;
  Tensor x_s, x_t;
};

inline GeneratorFixture generator_fixture(std::uint64_t seed) {
  return draw_clear<GeneratorFixture>(
      seed,
      [](Rng& rng) {
        const std::size_t b = small_batch(rng);
        MLP g = small_mlp(rng, 5, {6, 4}, 3, TaskKind::multiclass);
        return GeneratorFixture{std::move(g), small_disc(rng, 4), small_disc(rng, 4), random_tensor(rng, b, 5), random_tensor(rng, b, 5)};
      },
      [](GeneratorFixture& f) {
        if (kink_margin(f.generator.trunk(), f.x_s) <= kink_clearance) return false;
        const Tensor feat = f.generator.forward(f.x_s).feature;
        return kink_margin(f.d_instance.hidden(), feat) > kink_clearance &&
               kink_margin(f.d_group.hidden(), column_mean(feat)) > kink_clearance;
      });
}

inline GradCheckReport check_generator_loss(std::uint64_t seed) {
  GeneratorFixture f = generator_fixture(seed);
  const AlignmentConfig cfg{0.8, 1.2, AlignmentMode::adversarial};
  LossFn fn = [&] {
    const Tensor feat = f.generator.forward(f.x_s).feature;
    const auto l = generator_alignment_loss(cfg, f.d_instance, f.d_group, feat);
    f.generator.backward_from_feature(l.grad_features);
    return l.loss;
  };
  return run_check(fn, f.generator.params(false));
}

inline GradCheckReport check_mse_alignment(std::uint64_t seed) {
  GeneratorFixture f = generator_fixture(seed);
  Rng rng(seed ^ 0x5eed);
  const Tensor f_t = random_tensor(rng, f.x_t.rows(), 4, 0.0, 1.5);
  LossFn fn = [&] {
    const auto l = mse_alignment_loss(f_t, f.generator.forward(f.x_s).feature);
    f.generator.backward_from_feature(l.grad_features);
    return l.loss;
  };
  return run_check(fn, f.generator.params(false));
}

struct JointFixture {
  MLP classifier;
  Tensor x_t, y_t, x_s, y_s;
};

inline GradCheckReport check_classifier_joint(std::uint64_t seed) {
  JointFixture f = draw_clear<JointFixture>(
      seed,
      [](Rng& rng) {
        MLP m = small_mlp(rng, 5, {6, 4}, 3, TaskKind::multiclass);
        const std::size_t bt = small_batch(rng);
        const std::size_t bs = small_batch(rng);
        return JointFixture{std::move(m), random_tensor(rng, bt, 5), random_one_hot(rng, bt, 3), random_tensor(rng, bs, 5),
                            random_one_hot(rng, bs, 3)};
      },
      [](JointFixture& f) {
        return kink_margin(f.classifier.trunk(), f.x_t) > kink_clearance && kink_margin(f.classifier.trunk(), f.x_s) > kink_clearance;
      });
  LossFn fn = [&] {
    return classifier_joint_loss(f.classifier, f.x_t, f.y_t, &f.x_s, &f.y_s, 0.6, TaskKind::multiclass).total;
  };
  return run_check(fn, f.classifier.params());
}

/// One full iteration's losses on a 2-sample batch: discriminator loss over D_I and D_G,
/// generator loss over G's trunk, and the joint classifier loss over M with pseudo-labels from G.
inline GradCheckReport check_akt_pipeline(std::uint64_t seed) {
  struct F {
    MLP classifier, generator;
    Discriminator d_instance, d_group;
    Tensor x_t, y_t, x_s;
  };
  F f = draw_clear<F>(
      seed,
      [](Rng& rng) {
        MLP m = small_mlp(rng, 5, {6, 4}, 3, TaskKind::multiclass);
        MLP g = small_mlp(rng, 5, {6, 4}, 3, TaskKind::multiclass);
        copy_classifier_head(m, g);
        return F{std::move(m), std::move(g), small_disc(rng, 4), small_disc(rng, 4), random_tensor(rng, 2, 5), random_one_hot(rng, 2, 3),
                 random_tensor(rng, 2, 5)};
      },
      [](F& f) {
        if (kink_margin(f.classifier.trunk(), f.x_t) <= kink_clearance) return false;
        if (kink_margin(f.classifier.trunk(), f.x_s) <= kink_clearance) return false;
        if (kink_margin(f.generator.trunk(), f.x_s) <= kink_clearance) return false;
        const Tensor ft = f.classifier.forward(f.x_t).feature;
        const Tensor fs = f.generator.forward(f.x_s).feature;
        for (Discriminator* d : {&f.d_instance, &f.d_group}) {
          const bool group = d == &f.d_group;
          if (kink_margin(d->hidden(), group ? column_mean(ft) : ft) <= kink_clearance) return false;
          if (kink_margin(d->hidden(), group ? column_mean(fs) : fs) <= kink_clearance) return false;
        }
        return true;
      });
  const AlignmentConfig cfg{1.0, 1.0, AlignmentMode::adversarial};

  std::vector<ParamRef> d_params = f.d_instance.params();
  for (auto& p : f.d_group.params()) d_params.push_back({"group." + p.name, p.value, p.grad});
  const Tensor f_t = f.classifier.forward(f.x_t).feature;
  const Tensor f_s = f.generator.forward(f.x_s).feature;
  GradCheckReport worst = run_check([&] { return total_disc_loss(cfg, f.d_instance, f.d_group, f_t, f_s).total; }, d_params);
  worst.worst_parameter = "D." + worst.worst_parameter;

  auto keep_worse = [&](GradCheckReport r, const char* prefix) {
    worst.coordinates += r.coordinates;
    if (r.max_relative_error > worst.max_relative_error) {
      r.coordinates = worst.coordinates;
      r.worst_parameter = prefix + r.worst_parameter;
      worst = r;
    }
  };
  keep_worse(run_check(
                 [&] {
                   const auto l = generator_alignment_loss(cfg, f.d_instance, f.d_group, f.generator.forward(f.x_s).feature);
                   f.generator.backward_from_feature(l.grad_features);
                   return l.loss;
                 },
                 f.generator.params(false)),
             "G.");
  const Tensor pseudo = predict_pseudo_labels(f.generator, f.x_s, TaskKind::multiclass);
  keep_worse(run_check(
                 [&] { return classifier_joint_loss(f.classifier, f.x_t, f.y_t, &f.x_s, &pseudo, 1.0, TaskKind::multiclass).total; },
                 f.classifier.params()),
             "M.");
  return worst;
}

}  // namespace detail

struct GradCheckCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t)> run;
};

/// Every registered check, each run on its own randomized fixture.
inline const std::vector<GradCheckCase>& gradcheck_registry() {
  static const std::vector<GradCheckCase> cases = {
      {"affine", detail::check_affine},
      {"relu", detail::check_relu},
      {"softmax_cross_entropy", detail::check_softmax_ce},
      {"sigmoid_bce", detail::check_sigmoid_bce},
      {"mlp_multiclass", [](std::uint64_t s) { return detail::check_mlp(s, TaskKind::multiclass, -1); }},
      {"mlp_multilabel", [](std::uint64_t s) { return detail::check_mlp(s, TaskKind::multilabel, -1); }},
      {"mlp_feature_tap", [](std::uint64_t s) { return detail::check_mlp(s, TaskKind::multiclass, 1); }},
      {"instance_discriminator_loss", detail::check_instance_disc},
      {"group_discriminator_loss", detail::check_group_disc},
      {"total_discriminator_loss", detail::check_total_disc},
      {"generator_alignment_loss", detail::check_generator_loss},
      {"mse_alignment_loss", detail::check_mse_alignment},
      {"classifier_joint_loss", detail::check_classifier_joint},
      {"akt_pipeline_2_samples", detail::check_akt_pipeline},
  };
  return cases;
}

inline std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 2024) {
  std::vector<GradCheckEntry> out;
  std::uint64_t k = 0;
  for (const auto& c : gradcheck_registry()) out.push_back({c.name, c.run(Rng::stream(seed, ++k).next_u64())});
  return out;
}

}  // namespace akt
