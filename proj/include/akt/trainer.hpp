#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "akt/alignment.hpp"
#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/kernel/loss.hpp"
#include "akt/kernel/sgd.hpp"
#include "akt/metrics.hpp"
#include "akt/networks.hpp"
#include "akt/rng.hpp"

namespace akt {

/// How G's trunk is started. `independent` draws it from its own seed stream, `shared` starts
/// it from M's initial weights, `after_warmup` copies M's trunk into G when warmup ends.
enum class GeneratorInit { independent, shared, after_warmup };

inline const char* to_string(GeneratorInit g) {
  switch (g) {
    case GeneratorInit::independent: return "independent";
    case GeneratorInit::shared: return "shared";
    case GeneratorInit::after_warmup: return "after_warmup";
  }
  return "?";
}

struct TrainerConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 96;
  double lr_m = 0.01;
  double lr_g = 0.01;
  double lr_d = 0.001;
  double momentum = 0.9;          // classifier
  double weight_decay = 0.0005;   // classifier
  double adversary_momentum = 0.0;  // generator and discriminators
  double lambda_s = 1.0;
  AlignmentConfig alignment;
  std::size_t d_updates_per_iter = 2;
  std::size_t g_updates_per_iter = 1;
  double lr_decay_factor = 0.1;
  double lr_decay_fraction = 0.75;
  std::size_t warmup_epochs = 0;
  std::vector<std::size_t> disc_hidden{64, 32};
  GeneratorInit generator_init = GeneratorInit::independent;
  std::uint64_t seed = 0;

  /// Epoch (0-based) at whose start lr_m and lr_g are multiplied by lr_decay_factor.
  [[nodiscard]] std::size_t decay_epoch() const {
    return static_cast<std::size_t>(std::ceil(lr_decay_fraction * static_cast<double>(epochs)));
  }

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(lr_m) || !positive(lr_g) || !positive(lr_d)) throw ValidationError("TrainerConfig: learning rates must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0) || !(adversary_momentum >= 0.0 && adversary_momentum < 1.0)) {
      throw ValidationError("TrainerConfig: momentum must lie in [0,1)");
    }
    if (!(weight_decay >= 0.0)) throw ValidationError("TrainerConfig: weight_decay must be >= 0");
    if (!(std::isfinite(lambda_s) && lambda_s >= 0.0)) throw ValidationError("TrainerConfig: lambda_s must be finite and >= 0");
    if (!positive(lr_decay_factor)) throw ValidationError("TrainerConfig: lr_decay_factor must be > 0");
    if (!(lr_decay_fraction > 0.0 && lr_decay_fraction <= 1.0)) throw ValidationError("TrainerConfig: lr_decay_fraction must lie in (0,1]");
    if (batch_size == 0) throw ValidationError("TrainerConfig: batch_size must be >= 1");
    if (alignment.mode == AlignmentMode::adversarial && d_updates_per_iter == 0 && g_updates_per_iter == 0) {
      throw ValidationError("TrainerConfig: adversarial mode needs discriminator or generator updates");
    }
    alignment.validate();
  }
};

/// Seed streams derived from TrainerConfig::seed.
enum class SeedStream : std::uint64_t {
  classifier = 1,
  generator = 2,
  d_instance = 3,
  d_group = 4,
  target_batches = 5,
  target_aux_batches = 6,
  source_batches = 7,
  extra_head = 8,
};

inline std::uint64_t derive_seed(std::uint64_t seed, SeedStream s) {
  return Rng::stream(seed, static_cast<std::uint64_t>(s)).next_u64();
}

struct TrainState {
  MLP classifier;
  MLP generator;
  Discriminator d_instance;
  Discriminator d_group;
  OptimizerState opt_classifier;
  OptimizerState opt_generator;
  OptimizerState opt_d_instance;
  OptimizerState opt_d_group;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
};

inline TrainState init_train_state(const MLPSpec& spec, const TrainerConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.classifier = init_mlp(spec, derive_seed(cfg.seed, SeedStream::classifier));
  s.generator = cfg.generator_init != GeneratorInit::independent ? s.classifier : init_mlp(spec, derive_seed(cfg.seed, SeedStream::generator));
  s.d_instance = init_discriminator(spec.feature_dim(), cfg.disc_hidden, derive_seed(cfg.seed, SeedStream::d_instance));
  s.d_group = init_discriminator(spec.feature_dim(), cfg.disc_hidden, derive_seed(cfg.seed, SeedStream::d_group));
  s.opt_classifier = OptimizerState(s.classifier.params(), {cfg.lr_m, cfg.momentum, cfg.weight_decay});
  s.opt_generator = OptimizerState(s.generator.params(false), {cfg.lr_g, cfg.adversary_momentum, 0.0});
  s.opt_d_instance = OptimizerState(s.d_instance.params(), {cfg.lr_d, cfg.adversary_momentum, 0.0});
  s.opt_d_group = OptimizerState(s.d_group.params(), {cfg.lr_d, cfg.adversary_momentum, 0.0});
  return s;
}

/// The three sampling streams of one run. The target stream is epoch-bound and feeds the
/// classifier step; discriminator-side target batches come from an independent cycling stream.
struct TrainStreams {
  BatchStream target;
  BatchStream target_aux;
  std::optional<BatchStream> source;

  TrainStreams(const LabeledDataset& target_train, const UnlabeledDataset* source_set, const TrainerConfig& cfg)
      : target(target_train.X, &target_train.Y, cfg.batch_size, Rng(derive_seed(cfg.seed, SeedStream::target_batches)), false),
        target_aux(target_train.X, &target_train.Y, cfg.batch_size, Rng(derive_seed(cfg.seed, SeedStream::target_aux_batches)), true) {
    if (source_set) source.emplace(source_set->X, nullptr, cfg.batch_size, Rng(derive_seed(cfg.seed, SeedStream::source_batches)), true);
  }

  Batch next_source(const char* what) {
    if (!source) throw StreamError(std::string("no source dataset for ") + what);
    return source->require_next(what);
  }
};

/// Batch-averaged cross-entropy in the form the task calls for.
inline LossResult classification_loss(const Tensor& logits, const Tensor& labels, TaskKind kind) {
  return kind == TaskKind::multiclass ? softmax_cross_entropy(logits, labels) : sigmoid_bce(logits, labels);
}

struct JointLoss {
  double total = 0.0;
  double target = 0.0;
  double source = 0.0;
};

/// CE(M(x_t), y_t) + lambda_s * CE(M(x_s), y_s), each term averaged over its own batch.
/// Gradients accumulate into M. With lambda_s == 0 or no source batch the source term is skipped.
inline JointLoss classifier_joint_loss(MLP& classifier, const Tensor& x_target, const Tensor& y_target,
                                       const Tensor* x_source, const Tensor* y_source, double lambda_s, TaskKind kind) {
  JointLoss out;
  auto fwd_t = classifier.forward(x_target);
  auto ce_t = classification_loss(fwd_t.logits, y_target, kind);
  classifier.backward(ce_t.grad);
  out.target = ce_t.loss;
  if (lambda_s != 0.0 && x_source != nullptr) {
    if (y_source == nullptr) throw ValidationError("classifier_joint_loss: source batch without labels");
    auto fwd_s = classifier.forward(*x_source);
    auto ce_s = classification_loss(fwd_s.logits, *y_source, kind);
    for (double& g : ce_s.grad.values()) g *= lambda_s;
    classifier.backward(ce_s.grad);
    out.source = ce_s.loss;
  }
  out.total = out.target + lambda_s * out.source;
  return out;
}

struct StepLosses {
  std::optional<double> loss_d;
  std::optional<double> loss_g;
  double loss_m_target = 0.0;
  double loss_m_source = 0.0;
};

namespace detail {

inline void require_finite(double v, const char* step) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss in ") + step);
}

inline Tensor features_of(MLP& net, const Tensor& x) { return net.forward(x).feature; }

}  // namespace detail

/// One iteration of adversarial knowledge transfer:
///  (a) discriminator updates on fresh (target, source) pairs,
///  (b) generator updates on fresh source batches (trunk only),
///  (c) head copy M -> G, pseudo-labels for a fresh source batch, classifier update.
/// mse mode replaces (a)+(b) by a batch-mean L2 generator update; none skips both.
inline StepLosses akt_train_step(TrainState& s, TrainStreams& streams, const TrainerConfig& cfg,
                                 const Batch& classifier_batch, double lambda_s) {
  const TaskKind kind = s.classifier.spec().task_kind;
  const auto mode = cfg.alignment.mode;
  StepLosses out;

  if (mode == AlignmentMode::adversarial && cfg.d_updates_per_iter > 0) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cfg.d_updates_per_iter; ++k) {
      const Batch bt = streams.target_aux.require_next("discriminator target batch");
      const Batch bs = streams.next_source("discriminator source batch");
      const Tensor f_t = detail::features_of(s.classifier, bt.X);
      const Tensor f_s = detail::features_of(s.generator, bs.X);
      s.d_instance.zero_grad();
      s.d_group.zero_grad();
      const auto l = total_disc_loss(cfg.alignment, s.d_instance, s.d_group, f_t, f_s);
      detail::require_finite(l.total, "step (a) discriminator update");
      sgd_step(s.d_instance.params(), s.opt_d_instance);
      sgd_step(s.d_group.params(), s.opt_d_group);
      sum += l.total;
    }
    out.loss_d = sum / static_cast<double>(cfg.d_updates_per_iter);
  }

  if (mode != AlignmentMode::none && cfg.g_updates_per_iter > 0) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cfg.g_updates_per_iter; ++k) {
      const Batch bs = streams.next_source("generator source batch");
      s.generator.zero_grad();
      const Tensor f_s = s.generator.forward(bs.X).feature;
      AlignmentLoss l;
      if (mode == AlignmentMode::adversarial) {
        l = generator_alignment_loss(cfg.alignment, s.d_instance, s.d_group, f_s);
      } else {
        const Batch bt = streams.target_aux.require_next("mse target batch");
        l = mse_alignment_loss(detail::features_of(s.classifier, bt.X), f_s);
      }
      detail::require_finite(l.loss, "step (b) generator update");
      s.generator.backward_from_feature(l.grad_features);
      sgd_step(s.generator.params(false), s.opt_generator);
      sum += l.loss;
    }
    out.loss_g = sum / static_cast<double>(cfg.g_updates_per_iter);
  }

  copy_classifier_head(s.classifier, s.generator);
  std::optional<Batch> source_batch;
  Tensor pseudo;
  if (lambda_s != 0.0) {
    source_batch = streams.next_source("classifier source batch");
    pseudo = predict_pseudo_labels(s.generator, source_batch->X, kind);
  }
  s.classifier.zero_grad();
  const auto jl = classifier_joint_loss(s.classifier, classifier_batch.X, *classifier_batch.Y,
                                        source_batch ? &source_batch->X : nullptr, source_batch ? &pseudo : nullptr,
                                        lambda_s, kind);
  detail::require_finite(jl.total, "step (c) classifier update");
  sgd_step(s.classifier.params(), s.opt_classifier);
  // Keep G's head equal to M's at iteration boundaries.
  copy_classifier_head(s.classifier, s.generator);
  out.loss_m_target = jl.target;
  out.loss_m_source = jl.source;
  ++s.iteration;
  return out;
}

/// Top-1 accuracy (multiclass) or mAP (multilabel), in percent. Runs on a copy of M.
inline double evaluate_model(const MLP& classifier, const LabeledDataset& data, TaskKind kind) {
  if (data.size() == 0) throw ValidationError("evaluate_model: empty dataset");
  MLP snapshot = classifier;
  const Tensor logits = snapshot.forward(data.X).logits;
  return kind == TaskKind::multiclass ? top1_accuracy(logits, data.Y) : mean_average_precision(logits, data.Y);
}

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  std::optional<double> loss_d;
  std::optional<double> loss_g;
  double loss_m_target = 0.0;
  double loss_m_source = 0.0;
  double lr_m = 0.0;
  std::optional<double> target_test_score;
  std::optional<double> pseudo_label_agreement;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrainHooks {
  std::function<void(const TrainState&, const StepLosses&)> on_iteration;
  std::function<void(const MetricsRecord&)> on_epoch;
  /// Diagnostic agreement of G's pseudo-labels with held-out source classes.
  std::function<std::optional<double>(const TrainState&)> pseudo_label_agreement;
};

struct TrainingData {
  const LabeledDataset* target_train = nullptr;
  const LabeledDataset* target_test = nullptr;
  const UnlabeledDataset* source = nullptr;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> history;
};

namespace detail {

struct EpochAccumulator {
  double d = 0.0, g = 0.0, mt = 0.0, ms = 0.0;
  std::size_t nd = 0, ng = 0, n = 0;

  void add(const StepLosses& l) {
    if (l.loss_d) {
      d += *l.loss_d;
      ++nd;
    }
    if (l.loss_g) {
      g += *l.loss_g;
      ++ng;
    }
    mt += l.loss_m_target;
    ms += l.loss_m_source;
    ++n;
  }

  MetricsRecord record(std::size_t epoch, double lr) const {
    MetricsRecord r;
    r.epoch = epoch;
    if (nd) r.loss_d = d / static_cast<double>(nd);
    if (ng) r.loss_g = g / static_cast<double>(ng);
    r.loss_m_target = n ? mt / static_cast<double>(n) : 0.0;
    r.loss_m_source = n ? ms / static_cast<double>(n) : 0.0;
    r.lr_m = lr;
    return r;
  }
};

/// Epoch loop shared by every trainer: LR decay, warmup, metrics. `step` runs one
/// iteration given the classifier batch and the effective lambda_s.
template <typename StepFn>
void run_epochs(TrainState& s, TrainStreams& streams, const TrainingData& data, const TrainerConfig& cfg,
                std::size_t first_epoch, std::size_t last_epoch, const TrainHooks& hooks, std::vector<MetricsRecord>& history,
                StepFn&& step) {
  const TaskKind kind = s.classifier.spec().task_kind;
  for (std::size_t e = first_epoch; e < last_epoch; ++e) {
    if (e == cfg.decay_epoch() && e > 0) {
      s.opt_classifier.set_lr(s.opt_classifier.hyper().lr * cfg.lr_decay_factor);
      s.opt_generator.set_lr(s.opt_generator.hyper().lr * cfg.lr_decay_factor);
    }
    if (cfg.generator_init == GeneratorInit::after_warmup && e == cfg.warmup_epochs && e > 0) {
      auto& g_layers = s.generator.trunk().layers();
      const auto& m_layers = s.classifier.trunk().layers();
      for (std::size_t k = 0; k < g_layers.size(); ++k) {
        g_layers[k].W = m_layers[k].W;
        g_layers[k].b = m_layers[k].b;
      }
      for (auto& v : s.opt_generator.velocity()) v.fill(0.0);
    }
    const double lambda_s = e < cfg.warmup_epochs ? 0.0 : cfg.lambda_s;
    EpochAccumulator acc;
    while (auto batch = streams.target.next()) {
      const StepLosses l = step(*batch, lambda_s);
      acc.add(l);
      if (hooks.on_iteration) hooks.on_iteration(s, l);
    }
    s.epoch = e + 1;
    MetricsRecord rec = acc.record(e + 1, s.opt_classifier.hyper().lr);
    if (data.target_test) rec.target_test_score = evaluate_model(s.classifier, *data.target_test, kind);
    if (hooks.pseudo_label_agreement) rec.pseudo_label_agreement = hooks.pseudo_label_agreement(s);
    for (double v : {rec.loss_m_target, rec.loss_m_source, rec.loss_d.value_or(0.0), rec.loss_g.value_or(0.0)}) {
      if (!std::isfinite(v)) throw NumericError("non-finite epoch metric at epoch " + std::to_string(e + 1));
    }
    history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
}

inline void check_data(const TrainingData& data, const MLPSpec& spec) {
  if (!data.target_train || data.target_train->size() == 0) throw ValidationError("training: empty target dataset");
  if (data.target_train->dim() != spec.input_dim) throw ShapeError("training: target feature width differs from input_dim");
  if (data.target_train->class_count != spec.num_classes) throw ShapeError("training: target class count differs from num_classes");
  if (data.source && data.source->size() > 0 && data.source->dim() != spec.input_dim) {
    throw ShapeError("training: source feature width differs from input_dim");
  }
}

}  // namespace detail

/// Continues training from an existing state with the adversarial step until cfg.epochs.
inline TrainResult run_training_from(TrainState state, const TrainingData& data, const TrainerConfig& cfg,
                                     const TrainHooks& hooks = {}) {
  cfg.validate();
  detail::check_data(data, state.classifier.spec());
  const bool needs_source = cfg.alignment.mode != AlignmentMode::none || cfg.lambda_s != 0.0;
  if (needs_source && (!data.source || data.source->size() == 0)) throw ValidationError("training: source dataset required");

  TrainResult result{std::move(state), {}};
  if (cfg.epochs == 0) return result;
  TrainStreams streams(*data.target_train, needs_source ? data.source : nullptr, cfg);
  TrainState& s = result.state;
  detail::run_epochs(s, streams, data, cfg, 0, cfg.epochs, hooks, result.history,
                     [&](const Batch& b, double lambda_s) { return akt_train_step(s, streams, cfg, b, lambda_s); });
  return result;
}

/// Full adversarial knowledge transfer run. One epoch is one drop-last pass over the target set.
inline TrainResult run_training(const TrainingData& data, const MLPSpec& spec, const TrainerConfig& cfg,
                                const TrainHooks& hooks = {}) {
  cfg.validate();
  return run_training_from(init_train_state(spec, cfg), data, cfg, hooks);
}

}  // namespace akt
