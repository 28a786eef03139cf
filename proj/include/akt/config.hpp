#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/networks.hpp"
#include "akt/trainer.hpp"

namespace akt {

enum class TaskSource { synth, idx_pair, custom };
enum class Method { akt, scratch, static_pseudo, finetune, joint };

inline const char* to_string(TaskSource t) {
  switch (t) {
    case TaskSource::synth: return "synth";
    case TaskSource::idx_pair: return "idx_pair";
    case TaskSource::custom: return "custom";
  }
  return "?";
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::akt: return "akt";
    case Method::scratch: return "scratch";
    case Method::static_pseudo: return "static_pseudo";
    case Method::finetune: return "finetune";
    case Method::joint: return "joint";
  }
  return "?";
}

struct IdxPaths {
  std::string target_train_images;
  std::string target_train_labels;
  std::string target_test_images;
  std::string target_test_labels;
  std::string source_images;
  std::size_t target_train_limit = 0;  // 0: all
  std::size_t target_test_limit = 0;
  std::size_t source_limit = 0;
  std::size_t target_label_offset = 0;
  std::size_t target_num_classes = 0;  // 0: infer
};

struct ExperimentConfig {
  TaskSource task = TaskSource::synth;
  Method method = Method::akt;
  std::string output_dir = "runs/default";
  bool verbose = false;
  bool checkpoint_all = false;  // also store G, D_I, D_G
  TrainerConfig trainer;
  std::vector<std::size_t> hidden_dims{256, 128};
  int feature_tap = -1;
  TaskKind task_kind = TaskKind::multiclass;
  std::size_t static_phase1_epochs = 0;  // 0: half of epochs
  std::size_t topline_source_epochs = 10;
  double topline_source_weight = 1.0;
  SyntheticSpec synth;
  IdxPaths idx;

  [[nodiscard]] std::size_t phase1_epochs() const {
    return static_phase1_epochs ? static_phase1_epochs : trainer.epochs / 2;
  }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ValidationError("config: " + key + " expects a number, got '" + text + "'");
  }
  return v;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

inline std::string render_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config: " + key + " expects true or false, got '" + text + "'");
}

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& text, const std::pair<const char*, E> (&names)[N]) {
  for (const auto& [n, v] : names)
    if (text == n) return v;
  std::string allowed;
  for (const auto& [n, v] : names) allowed += (allowed.empty() ? "" : "|") + std::string(n);
  throw ValidationError("config: " + key + " expects one of " + allowed + ", got '" + text + "'");
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct ConfigKey {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define AKT_NUM_KEY(NAME, FIELD, TYPE)                                                                        \
  ConfigKey{NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(NAME, v); }, \
            [](const ExperimentConfig& c) { return num_to_string(c.FIELD); }}
#define AKT_STR_KEY(NAME, FIELD)                                                          \
  ConfigKey{NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; }, \
            [](const ExperimentConfig& c) { return c.FIELD; }}

template <typename T>
std::string num_to_string(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

inline constexpr std::pair<const char*, TaskSource> task_names[] = {
    {"synth", TaskSource::synth}, {"idx_pair", TaskSource::idx_pair}, {"custom", TaskSource::custom}};
inline constexpr std::pair<const char*, Method> method_names[] = {{"akt", Method::akt},
                                                                  {"scratch", Method::scratch},
                                                                  {"static_pseudo", Method::static_pseudo},
                                                                  {"finetune", Method::finetune},
                                                                  {"joint", Method::joint}};
inline constexpr std::pair<const char*, AlignmentMode> alignment_names[] = {
    {"adversarial", AlignmentMode::adversarial}, {"mse", AlignmentMode::mse}, {"none", AlignmentMode::none}};
inline constexpr std::pair<const char*, GeneratorInit> generator_init_names[] = {
    {"independent", GeneratorInit::independent}, {"shared", GeneratorInit::shared}, {"after_warmup", GeneratorInit::after_warmup}};
inline constexpr std::pair<const char*, TaskKind> task_kind_names[] = {{"multiclass", TaskKind::multiclass},
                                                                       {"multilabel", TaskKind::multilabel}};

/// Every accepted key, in canonical render order.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"task", [](ExperimentConfig& c, const std::string& v) { c.task = parse_enum("task", v, task_names); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.task)); }},
      {"method", [](ExperimentConfig& c, const std::string& v) { c.method = parse_enum("method", v, method_names); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.method)); }},
      AKT_STR_KEY("output_dir", output_dir),
      {"verbose", [](ExperimentConfig& c, const std::string& v) { c.verbose = parse_bool("verbose", v); },
       [](const ExperimentConfig& c) { return std::string(c.verbose ? "true" : "false"); }},
      {"checkpoint_all", [](ExperimentConfig& c, const std::string& v) { c.checkpoint_all = parse_bool("checkpoint_all", v); },
       [](const ExperimentConfig& c) { return std::string(c.checkpoint_all ? "true" : "false"); }},
      AKT_NUM_KEY("seed", trainer.seed, std::uint64_t),
      AKT_NUM_KEY("epochs", trainer.epochs, std::size_t),
      AKT_NUM_KEY("batch_size", trainer.batch_size, std::size_t),
      AKT_NUM_KEY("lr_m", trainer.lr_m, double),
      AKT_NUM_KEY("lr_g", trainer.lr_g, double),
      AKT_NUM_KEY("lr_d", trainer.lr_d, double),
      AKT_NUM_KEY("momentum", trainer.momentum, double),
      AKT_NUM_KEY("weight_decay", trainer.weight_decay, double),
      AKT_NUM_KEY("adversary_momentum", trainer.adversary_momentum, double),
      AKT_NUM_KEY("lambda_s", trainer.lambda_s, double),
      AKT_NUM_KEY("lambda_di", trainer.alignment.lambda_di, double),
      AKT_NUM_KEY("lambda_dg", trainer.alignment.lambda_dg, double),
      {"alignment",
       [](ExperimentConfig& c, const std::string& v) { c.trainer.alignment.mode = parse_enum("alignment", v, alignment_names); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.trainer.alignment.mode)); }},
      AKT_NUM_KEY("d_updates_per_iter", trainer.d_updates_per_iter, std::size_t),
      AKT_NUM_KEY("g_updates_per_iter", trainer.g_updates_per_iter, std::size_t),
      AKT_NUM_KEY("lr_decay_factor", trainer.lr_decay_factor, double),
      AKT_NUM_KEY("lr_decay_fraction", trainer.lr_decay_fraction, double),
      AKT_NUM_KEY("warmup_epochs", trainer.warmup_epochs, std::size_t),
      {"disc_hidden", [](ExperimentConfig& c, const std::string& v) { c.trainer.disc_hidden = parse_size_list("disc_hidden", v); },
       [](const ExperimentConfig& c) { return render_size_list(c.trainer.disc_hidden); }},
      {"generator_init",
       [](ExperimentConfig& c, const std::string& v) {
         c.trainer.generator_init = parse_enum("generator_init", v, generator_init_names);
       },
       [](const ExperimentConfig& c) { return std::string(to_string(c.trainer.generator_init)); }},
      {"hidden_dims", [](ExperimentConfig& c, const std::string& v) { c.hidden_dims = parse_size_list("hidden_dims", v); },
       [](const ExperimentConfig& c) { return render_size_list(c.hidden_dims); }},
      AKT_NUM_KEY("feature_tap", feature_tap, int),
      {"task_kind", [](ExperimentConfig& c, const std::string& v) { c.task_kind = parse_enum("task_kind", v, task_kind_names); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.task_kind)); }},
      AKT_NUM_KEY("static_phase1_epochs", static_phase1_epochs, std::size_t),
      AKT_NUM_KEY("topline_source_epochs", topline_source_epochs, std::size_t),
      AKT_NUM_KEY("topline_source_weight", topline_source_weight, double),
      AKT_NUM_KEY("synth_dims", synth.dims, std::size_t),
      AKT_NUM_KEY("synth_target_classes", synth.target_classes, std::size_t),
      AKT_NUM_KEY("synth_source_classes", synth.source_classes, std::size_t),
      AKT_NUM_KEY("synth_target_train_per_class", synth.target_train_per_class, std::size_t),
      AKT_NUM_KEY("synth_target_test_per_class", synth.target_test_per_class, std::size_t),
      AKT_NUM_KEY("synth_source_samples", synth.source_samples, std::size_t),
      AKT_NUM_KEY("synth_separation", synth.separation, double),
      AKT_NUM_KEY("synth_noise", synth.noise, double),
      AKT_NUM_KEY("synth_source_offset", synth.source_offset, double),
      AKT_STR_KEY("target_train_images", idx.target_train_images),
      AKT_STR_KEY("target_train_labels", idx.target_train_labels),
      AKT_STR_KEY("target_test_images", idx.target_test_images),
      AKT_STR_KEY("target_test_labels", idx.target_test_labels),
      AKT_STR_KEY("source_images", idx.source_images),
      AKT_NUM_KEY("target_train_limit", idx.target_train_limit, std::size_t),
      AKT_NUM_KEY("target_test_limit", idx.target_test_limit, std::size_t),
      AKT_NUM_KEY("source_limit", idx.source_limit, std::size_t),
      AKT_NUM_KEY("target_label_offset", idx.target_label_offset, std::size_t),
      AKT_NUM_KEY("target_num_classes", idx.target_num_classes, std::size_t),
  };
  return keys;
}

#undef AKT_NUM_KEY
#undef AKT_STR_KEY

inline std::string nearest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& k : config_keys()) {
    const std::size_t d = edit_distance(key, k.name);
    if (d < best_d) {
      best_d = d;
      best = k.name;
    }
  }
  return best;
}

}  // namespace detail

/// Canonical text: every key in fixed order, one `key = value` line each.
inline std::string render_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += std::string(k.name) + " = " + k.get(c) + "\n";
  return out;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return render_config(a) == render_config(b); }

/// Rejects configs that cannot run: missing paths for file tasks, bad trainer or network values.
inline void validate_config(const ExperimentConfig& c) {
  c.trainer.validate();
  if (c.hidden_dims.empty()) throw ValidationError("config: hidden_dims must name at least one layer");
  if (c.trainer.disc_hidden.empty()) throw ValidationError("config: disc_hidden must name at least one layer");
  if (c.output_dir.empty()) throw ValidationError("config: output_dir must not be empty");
  if (c.task != TaskSource::synth) {
    const std::pair<const char*, const std::string*> required[] = {
        {"target_train_images", &c.idx.target_train_images}, {"target_train_labels", &c.idx.target_train_labels},
        {"target_test_images", &c.idx.target_test_images},   {"target_test_labels", &c.idx.target_test_labels},
        {"source_images", &c.idx.source_images}};
    for (const auto& [name, value] : required) {
      if (value->empty()) throw ValidationError(std::string("config: task ") + to_string(c.task) + " requires " + name);
    }
    if (c.method == Method::finetune || c.method == Method::joint) {
      throw ValidationError("config: finetune and joint need source labels, available only with task = synth");
    }
  }
  if (c.method == Method::static_pseudo && c.phase1_epochs() > c.trainer.epochs) {
    throw ValidationError("config: static_phase1_epochs exceeds epochs");
  }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
/// `defaults` supplies values for omitted keys.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig defaults = {}) {
  ExperimentConfig c = std::move(defaults);
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = detail::trim(std::string_view(stripped).substr(0, eq));
    const std::string value = detail::trim(std::string_view(stripped).substr(eq + 1));
    const auto& keys = detail::config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return key == k.name; });
    if (it == keys.end()) {
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "' (did you mean '" +
                            detail::nearest_key(key) + "'?)");
    }
    if (auto [prev, inserted] = seen.emplace(key, line_no); !inserted) {
      throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first set on line " +
                            std::to_string(prev->second) + ")");
    }
    it->set(c, value);
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

/// FNV-1a over the canonical rendering, as 16 hex digits. output_dir and verbose do not
/// change what is computed, so they are left out.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig effective = c;
  effective.output_dir = "-";
  effective.verbose = false;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : render_config(effective)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace akt
