#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>

#include "akt/baselines.hpp"
#include "akt/checkpoint.hpp"
#include "akt/config.hpp"
#include "akt/data.hpp"
#include "akt/metrics.hpp"
#include "akt/trainer.hpp"

namespace akt {

/// Environment variable that relocates relative output_dir values.
inline constexpr const char* output_root_env = "AKT_OUTPUT_ROOT";

/// Everything one experiment trains and evaluates on. Diagnostics exist only for synthetic tasks.
struct ExperimentData {
  LabeledDataset target_train;
  LabeledDataset target_test;
  UnlabeledDataset source;
  std::optional<SourceDiagnostics> diagnostics;

  [[nodiscard]] TrainingData view() const { return {&target_train, &target_test, &source}; }
};

inline SyntheticSpec synthetic_spec(const ExperimentConfig& cfg) {
  SyntheticSpec s = cfg.synth;
  s.seed = cfg.trainer.seed;
  return s;
}

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.task == TaskSource::synth) {
    SyntheticTask t = make_synthetic_transfer_task(synthetic_spec(cfg));
    return {std::move(t.target_train), std::move(t.target_test), std::move(t.source), std::move(t.diagnostics)};
  }
  auto limit = [](std::size_t n) { return n ? std::optional<std::size_t>(n) : std::nullopt; };
  IdxLoadOptions train_opts{limit(cfg.idx.target_train_limit), cfg.idx.target_num_classes, cfg.idx.target_label_offset};
  IdxLoadOptions test_opts{limit(cfg.idx.target_test_limit), cfg.idx.target_num_classes, cfg.idx.target_label_offset};
  ExperimentData d;
  d.target_train = std::get<LabeledDataset>(load_idx(cfg.idx.target_train_images, cfg.idx.target_train_labels, train_opts));
  d.target_test = std::get<LabeledDataset>(load_idx(cfg.idx.target_test_images, cfg.idx.target_test_labels, test_opts));
  d.source = std::get<UnlabeledDataset>(load_idx(cfg.idx.source_images, std::nullopt, {limit(cfg.idx.source_limit), 0, 0}));
  if (d.target_train.class_count != d.target_test.class_count) {
    throw ValidationError("target train and test label sets differ in class count (" + std::to_string(d.target_train.class_count) +
                          " vs " + std::to_string(d.target_test.class_count) + "); set target_num_classes");
  }
  if (d.target_train.dim() != d.source.dim()) throw ShapeError("target and source images differ in size");
  if (cfg.task == TaskSource::idx_pair && d.target_train.dim() != 28 * 28) {
    throw ValidationError("task idx_pair expects 28x28 images; use task = custom for other sizes");
  }
  return d;
}

inline MLPSpec network_spec(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  MLPSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_dims = cfg.hidden_dims;
  spec.num_classes = num_classes;
  spec.task_kind = cfg.task_kind;
  spec.feature_tap = cfg.feature_tap;
  spec.validate();
  return spec;
}

/// Trains with the configured method; no files are touched.
inline TrainResult train_method(const ExperimentConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {}) {
  const MLPSpec spec = network_spec(cfg, data.target_train.dim(), data.target_train.class_count);
  const TrainingData view = data.view();
  switch (cfg.method) {
    case Method::akt: return run_training(view, spec, cfg.trainer, hooks);
    case Method::scratch: return train_scratch(view, spec, cfg.trainer, hooks);
    case Method::static_pseudo: return train_static_pseudo_labels(view, spec, cfg.trainer, cfg.phase1_epochs(), hooks).result;
    case Method::finetune:
    case Method::joint: {
      if (!data.diagnostics) throw ValidationError("finetune and joint need source labels, which only synthetic tasks have");
      const LabeledDataset src = labeled_source(data.source, *data.diagnostics);
      const ToplineOptions opts{cfg.topline_source_epochs, cfg.topline_source_weight};
      return train_supervised_topline(cfg.method == Method::finetune ? BaselineKind::finetune : BaselineKind::joint, view, &src,
                                      spec, cfg.trainer, opts, hooks);
    }
  }
  throw ValidationError("unknown method");
}

/// Agreement of pseudo-labels with the diagnostic classes. AKT labels with G; every other
/// method is scored on its classifier's own predictions.
inline std::function<std::optional<double>(const TrainState&)> agreement_hook(const ExperimentConfig& cfg, const ExperimentData& data) {
  if (!data.diagnostics) return {};
  const bool use_generator = cfg.method == Method::akt;
  return [&data, use_generator](const TrainState& s) -> std::optional<double> {
    MLP net = use_generator ? s.generator : s.classifier;
    const Tensor labels = predict_pseudo_labels(net, data.source.X, net.spec().task_kind);
    return pseudo_label_reliability(labels, *data.diagnostics).score;
  };
}

inline const char* metrics_header = "epoch,loss_d,loss_g,loss_m_target,loss_m_source,lr_m,target_test_score,pseudo_label_agreement";

inline std::string metrics_row(const MetricsRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  return std::to_string(r.epoch) + "," + opt(r.loss_d) + "," + opt(r.loss_g) + "," + detail::format_double(r.loss_m_target) + "," +
         detail::format_double(r.loss_m_source) + "," + detail::format_double(r.lr_m) + "," + opt(r.target_test_score) + "," +
         opt(r.pseudo_label_agreement);
}

inline Checkpoint make_checkpoint(const ExperimentConfig& cfg, TrainState& s) {
  Checkpoint ck;
  ck.config_text = render_config(cfg);
  add_params(ck, "classifier.", s.classifier.params());
  if (cfg.checkpoint_all) {
    add_params(ck, "generator.", s.generator.params());
    add_params(ck, "d_instance.", s.d_instance.params());
    add_params(ck, "d_group.", s.d_group.params());
  }
  return ck;
}

/// Rebuilds the classifier stored in a checkpoint. Input width and class count come from the arrays.
inline std::pair<ExperimentConfig, MLP> classifier_from_checkpoint(const Checkpoint& ck) {
  ExperimentConfig cfg = parse_config(ck.config_text);
  const Tensor& first = ck.at("classifier.hidden0.W");
  const Tensor& head = ck.at("classifier.head.W");
  MLP net(network_spec(cfg, first.cols(), head.rows()));
  restore_params(ck, "classifier.", net.params());
  return {std::move(cfg), std::move(net)};
}

inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (const char* root = std::getenv(output_root_env); root && *root && p.is_relative()) p = std::filesystem::path(root) / p;
  return p;
}

struct ExperimentResult {
  std::filesystem::path output_dir;
  double final_score = 0.0;
  std::string config_hash;
  std::vector<MetricsRecord> history;
};

/// Runs one experiment end to end and writes metrics.csv (flushed per epoch), summary.txt and
/// checkpoint.akt into the output directory.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.trainer.epochs == 0) throw ValidationError("config: epochs must be >= 1 for a run");
  ExperimentResult out;
  out.output_dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(out.output_dir);
  out.config_hash = config_hash(cfg);

  const ExperimentData data = load_experiment_data(cfg);
  std::ofstream csv(out.output_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw Error("cannot write " + (out.output_dir / "metrics.csv").string());
  csv << metrics_header << '\n' << std::flush;

  std::ofstream iter_log;
  if (cfg.verbose) {
    iter_log.open(out.output_dir / "iterations.csv", std::ios::binary | std::ios::trunc);
    iter_log << "iteration,loss_d,loss_g,loss_m_target,loss_m_source\n";
  }

  TrainHooks hooks;
  hooks.pseudo_label_agreement = agreement_hook(cfg, data);
  hooks.on_epoch = [&](const MetricsRecord& r) { csv << metrics_row(r) << '\n' << std::flush; };
  if (cfg.verbose) {
    hooks.on_iteration = [&](const TrainState& s, const StepLosses& l) {
      auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
      iter_log << s.iteration << ',' << opt(l.loss_d) << ',' << opt(l.loss_g) << ',' << detail::format_double(l.loss_m_target) << ','
               << detail::format_double(l.loss_m_source) << '\n';
    };
  }

  TrainResult result = train_method(cfg, data, hooks);
  out.history = result.history;
  out.final_score = result.history.back().target_test_score.value_or(0.0);

  save_checkpoint(make_checkpoint(cfg, result.state), (out.output_dir / "checkpoint.akt").string());
  std::ofstream summary(out.output_dir / "summary.txt", std::ios::binary | std::ios::trunc);
  summary << "method = " << to_string(cfg.method) << '\n'
          << "task = " << to_string(cfg.task) << '\n'
          << "final_target_test_score = " << detail::format_double(out.final_score) << '\n'
          << "config_hash = " << out.config_hash << '\n';
  if (!summary) throw Error("cannot write " + (out.output_dir / "summary.txt").string());
  return out;
}

/// Writes a synthetic task as CSV files: label then features for target splits, features for the
/// source, and the diagnostic class table separately.
inline void write_synthetic_csv(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SyntheticTask t = make_synthetic_transfer_task(synthetic_spec(cfg));
  auto write_rows = [](const std::filesystem::path& path, const Tensor& X, const Tensor* Y) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < X.rows(); ++i) {
      if (Y) f << argmax(Y->row(i)) << ',';
      for (std::size_t j = 0; j < X.cols(); ++j) f << (j ? "," : "") << detail::format_double(X(i, j));
      f << '\n';
    }
  };
  write_rows(dir / "target_train.csv", t.target_train.X, &t.target_train.Y);
  write_rows(dir / "target_test.csv", t.target_test.X, &t.target_test.Y);
  write_rows(dir / "source.csv", t.source.X, nullptr);
  std::ofstream diag(dir / "source_diagnostics.csv", std::ios::binary | std::ios::trunc);
  diag << "source_class,declared_target_class\n";
  for (std::size_t c : t.diagnostics.source_class) {
    const auto& m = t.diagnostics.target_for_source[c];
    diag << c << ',' << (m ? std::to_string(*m) : std::string()) << '\n';
  }
}

}  // namespace akt
