#pragma once

#include <optional>
#include <string>

#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/networks.hpp"
#include "akt/trainer.hpp"

namespace akt {

enum class BaselineKind { scratch, static_pseudo_labels, finetune, joint };

/// Target-only training: the adversarial loop with alignment off and no source term.
inline TrainResult train_scratch(const TrainingData& data, const MLPSpec& spec, TrainerConfig cfg,
                                 const TrainHooks& hooks = {}) {
  cfg.alignment.mode = AlignmentMode::none;
  cfg.lambda_s = 0.0;
  return run_training(data, spec, cfg, hooks);
}

struct StaticPseudoResult {
  TrainResult result;
  Tensor phase2_labels;  // one hard label row per source sample, fixed for phase 3
};

/// Static pseudo-labelling: (1) train M on target only for phase1_epochs, (2) label every
/// source sample once with that M, (3) continue on target + labelled source with fixed labels.
inline StaticPseudoResult train_static_pseudo_labels(const TrainingData& data, const MLPSpec& spec,
                                                     const TrainerConfig& cfg, std::size_t phase1_epochs,
                                                     const TrainHooks& hooks = {}) {
  cfg.validate();
  detail::check_data(data, spec);
  if (phase1_epochs > cfg.epochs) throw ValidationError("static pseudo labels: phase-1 epochs exceed total epochs");
  const bool has_phase3 = phase1_epochs < cfg.epochs;
  if (has_phase3 && (!data.source || data.source->size() == 0)) throw ValidationError("static pseudo labels: source dataset required");

  StaticPseudoResult out{{init_train_state(spec, cfg), {}}, Tensor{}};
  if (cfg.epochs == 0) return out;
  TrainState& s = out.result.state;
  TrainStreams streams(*data.target_train, has_phase3 ? data.source : nullptr, cfg);
  const TaskKind kind = spec.task_kind;

  auto target_only = [&](const Batch& b, double) {
    copy_classifier_head(s.classifier, s.generator);
    s.classifier.zero_grad();
    const auto jl = classifier_joint_loss(s.classifier, b.X, *b.Y, nullptr, nullptr, 0.0, kind);
    detail::require_finite(jl.total, "classifier update");
    sgd_step(s.classifier.params(), s.opt_classifier);
    copy_classifier_head(s.classifier, s.generator);
    ++s.iteration;
    return StepLosses{std::nullopt, std::nullopt, jl.target, 0.0};
  };
  detail::run_epochs(s, streams, data, cfg, 0, phase1_epochs, hooks, out.result.history, target_only);
  if (!has_phase3) return out;

  {
    MLP frozen = s.classifier;
    out.phase2_labels = hard_labels(frozen.forward(data.source->X).logits, kind);
  }
  auto with_fixed_labels = [&](const Batch& b, double lambda_s) {
    std::optional<Batch> src;
    Tensor y_src;
    if (lambda_s != 0.0) {
      src = streams.next_source("static pseudo-label source batch");
      y_src = out.phase2_labels.gather_rows(src->indices);
    }
    s.classifier.zero_grad();
    const auto jl = classifier_joint_loss(s.classifier, b.X, *b.Y, src ? &src->X : nullptr, src ? &y_src : nullptr,
                                          lambda_s, kind);
    detail::require_finite(jl.total, "classifier update");
    sgd_step(s.classifier.params(), s.opt_classifier);
    copy_classifier_head(s.classifier, s.generator);
    ++s.iteration;
    return StepLosses{std::nullopt, std::nullopt, jl.target, jl.source};
  };
  detail::run_epochs(s, streams, data, cfg, phase1_epochs, cfg.epochs, hooks, out.result.history, with_fixed_labels);
  return out;
}

/// Source samples paired with their true classes; only the supervised toplines use this.
inline LabeledDataset labeled_source(const UnlabeledDataset& source, const SourceDiagnostics& diag) {
  if (diag.source_class.size() != source.size()) throw ValidationError("labeled_source: diagnostics do not cover the source set");
  return LabeledDataset{source.X, one_hot(diag.source_class, diag.source_class_count), diag.source_class_count,
                        source.name + "-labeled"};
}

struct ToplineOptions {
  /// finetune: epochs of source pre-training. joint: unused.
  std::size_t source_epochs = 0;
  /// joint: weight of the source-head loss. finetune: unused.
  double source_weight = 1.0;
};

/// Supervised upper bounds that see the true source labels.
///
/// finetune trains the network on the source classes, then keeps the trunk, attaches a
/// fresh target head and trains end to end on the target. joint trains one trunk with a
/// target head and a source head at the same time.
inline TrainResult train_supervised_topline(BaselineKind kind, const TrainingData& data, const LabeledDataset* source_labeled,
                                            const MLPSpec& spec, TrainerConfig cfg, const ToplineOptions& opts,
                                            const TrainHooks& hooks = {}) {
  if (kind != BaselineKind::finetune && kind != BaselineKind::joint) throw ValidationError("topline must be finetune or joint");
  if (!source_labeled || source_labeled->size() == 0) throw ValidationError("supervised topline requires labelled source data");
  if (source_labeled->dim() != spec.input_dim) throw ShapeError("topline: source feature width differs from input_dim");
  cfg.alignment.mode = AlignmentMode::none;
  cfg.lambda_s = 0.0;
  cfg.validate();
  detail::check_data(data, spec);

  if (kind == BaselineKind::finetune) {
    TrainState state = init_train_state(spec, cfg);
    if (opts.source_epochs > 0) {
      MLPSpec src_spec = spec;
      src_spec.num_classes = source_labeled->class_count;
      // Same seed as the target classifier: the trunk draws come first, so both start from one trunk.
      MLP src = init_mlp(src_spec, derive_seed(cfg.seed, SeedStream::classifier));
      OptimizerState opt(src.params(), {cfg.lr_m, cfg.momentum, cfg.weight_decay});
      BatchStream stream(source_labeled->X, &source_labeled->Y, cfg.batch_size,
                         Rng(derive_seed(cfg.seed, SeedStream::source_batches)), false);
      for (std::size_t e = 0; e < opts.source_epochs; ++e) {
        while (auto b = stream.next()) {
          src.zero_grad();
          const auto jl = classifier_joint_loss(src, b->X, *b->Y, nullptr, nullptr, 0.0, spec.task_kind);
          detail::require_finite(jl.total, "finetune source pre-training");
          sgd_step(src.params(), opt);
        }
      }
      auto& dst_layers = state.classifier.trunk().layers();
      const auto& src_layers = src.trunk().layers();
      for (std::size_t k = 0; k < dst_layers.size(); ++k) {
        dst_layers[k].W = src_layers[k].W;
        dst_layers[k].b = src_layers[k].b;
      }
    }
    return run_training_from(std::move(state), data, cfg, hooks);
  }

  // joint
  TrainResult result{init_train_state(spec, cfg), {}};
  if (cfg.epochs == 0) return result;
  TrainState& s = result.state;
  AffineLayer source_head(spec.feature_dim(), source_labeled->class_count);
  {
    Rng rng(derive_seed(cfg.seed, SeedStream::extra_head));
    glorot_init(source_head, rng);
  }
  std::vector<ParamRef> head_params{{"source_head.W", &source_head.W, &source_head.grad_W},
                                    {"source_head.b", &source_head.b, &source_head.grad_b}};
  OptimizerState head_opt(head_params, {cfg.lr_m, cfg.momentum, cfg.weight_decay});
  TrainStreams streams(*data.target_train, nullptr, cfg);
  BatchStream source_stream(source_labeled->X, &source_labeled->Y, cfg.batch_size,
                            Rng(derive_seed(cfg.seed, SeedStream::source_batches)), true);
  const TaskKind task = spec.task_kind;

  auto step = [&](const Batch& b, double) {
    s.classifier.zero_grad();
    const auto jl = classifier_joint_loss(s.classifier, b.X, *b.Y, nullptr, nullptr, 0.0, task);
    double source_loss = 0.0;
    if (opts.source_weight != 0.0) {
      const Batch sb = source_stream.require_next("joint source batch");
      source_head.zero_grad();
      const Tensor feature = s.classifier.trunk().forward(sb.X);
      const Tensor logits = affine_forward(feature, source_head);
      auto ce = classification_loss(logits, *sb.Y, task);
      for (double& g : ce.grad.values()) g *= opts.source_weight;
      s.classifier.trunk().backward(affine_backward(ce.grad, source_head));
      source_loss = ce.loss;
      head_opt.set_lr(s.opt_classifier.hyper().lr);
      sgd_step(head_params, head_opt);
    }
    detail::require_finite(jl.total + opts.source_weight * source_loss, "joint classifier update");
    sgd_step(s.classifier.params(), s.opt_classifier);
    copy_classifier_head(s.classifier, s.generator);
    ++s.iteration;
    return StepLosses{std::nullopt, std::nullopt, jl.target, source_loss};
  };
  detail::run_epochs(s, streams, data, cfg, 0, cfg.epochs, hooks, result.history, step);
  return result;
}

}  // namespace akt
