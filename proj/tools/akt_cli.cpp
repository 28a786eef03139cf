#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "akt/akt.hpp"

namespace {

int cmd_run(const std::string& config_path) {
  const akt::ExperimentConfig cfg = akt::load_config(config_path);
  const akt::ExperimentResult r = akt::run_experiment(cfg);
  std::printf("%s: final target test score %.4f (config %s)\n", r.output_dir.string().c_str(), r.final_score, r.config_hash.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& images, const std::string& labels) {
  const akt::Checkpoint ck = akt::load_checkpoint(ckpt_path);
  auto [cfg, net] = akt::classifier_from_checkpoint(ck);
  akt::IdxLoadOptions opts;
  opts.num_classes = net.spec().num_classes;
  opts.label_offset = cfg.idx.target_label_offset;
  const auto ds = std::get<akt::LabeledDataset>(akt::load_idx(images, labels, opts));
  if (ds.dim() != net.spec().input_dim) {
    throw akt::ShapeError("images have " + std::to_string(ds.dim()) + " pixels, checkpoint expects " +
                          std::to_string(net.spec().input_dim));
  }
  std::printf("%.4f\n", akt::evaluate_model(net, ds, net.spec().task_kind));
  return 0;
}

// Test hook: scales every affine weight gradient so the suite must fail.
constexpr const char* fault_env = "AKT_FAULT_AFFINE_GRAD_SCALE";

int cmd_gradcheck(std::uint64_t seed) {
  if (const char* f = std::getenv(fault_env)) akt::fault_injection::affine_weight_grad_scale() = std::stod(f);
  bool ok = true;
  for (const auto& e : akt::run_gradcheck_suite(seed)) {
    std::printf("%-30s max_rel_err %.3e  worst %s[%zu]  %s\n", e.name.c_str(), e.report.max_relative_error,
                e.report.worst_parameter.c_str(), e.report.worst_index, e.passed() ? "ok" : "FAIL");
    ok = ok && e.passed();
  }
  return ok ? 0 : 1;
}

int cmd_synth_gen(const std::string& config_path, const std::string& out_dir) {
  const akt::ExperimentConfig cfg = akt::load_config(config_path);
  if (cfg.task != akt::TaskSource::synth) throw akt::ValidationError("synth-gen needs task = synth");
  akt::write_synthetic_csv(cfg, out_dir);
  std::printf("wrote %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial knowledge transfer training and evaluation"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, images, labels, out_dir;
  std::uint64_t gc_seed = 2024;

  auto* run = app.add_subcommand("run", "Train as described by a config file");
  run->add_option("config", config_path, "key = value config file")->required();

  auto* eval = app.add_subcommand("eval", "Score a checkpoint's classifier on an IDX image/label pair");
  eval->add_option("checkpoint", ckpt_path)->required();
  eval->add_option("images", images)->required();
  eval->add_option("labels", labels)->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--seed", gc_seed, "fixture seed");

  auto* synth = app.add_subcommand("synth-gen", "Write the synthetic task of a config as CSV files");
  synth->add_option("config", config_path)->required();
  synth->add_option("out-dir", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path);
    if (*eval) return cmd_eval(ckpt_path, images, labels);
    if (*gc) return cmd_gradcheck(gc_seed);
    if (*synth) return cmd_synth_gen(config_path, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "akt: error: %s\n", e.what());
    return 2;
  }
  return 2;
}
