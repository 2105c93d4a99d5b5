#pragma once

// Flat key=value experiment configuration with dotted namespaces. Every key
// is registered with a type, default, and range; unknown keys are rejected
// with a nearest-key suggestion. All defaults resolve offline.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace relearn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  SfImageEasyHard,
  SfImageMislabel,
  SfLanguage,
  Lewis,
  LlfMlp,
  FreezeAblation,
  ValidateOp,
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::SfImageEasyHard: return "sf-image-easyhard";
    case ExperimentKind::SfImageMislabel: return "sf-image-mislabel";
    case ExperimentKind::SfLanguage: return "sf-language";
    case ExperimentKind::Lewis: return "lewis";
    case ExperimentKind::LlfMlp: return "llf-mlp";
    case ExperimentKind::FreezeAblation: return "freeze-ablation";
    case ExperimentKind::ValidateOp: return "validate-op";
  }
  return "?";
}

inline const std::vector<ExperimentKind>& all_experiments() {
  static const std::vector<ExperimentKind> kinds = {
      ExperimentKind::SfImageEasyHard, ExperimentKind::SfImageMislabel,
      ExperimentKind::SfLanguage,      ExperimentKind::Lewis,
      ExperimentKind::LlfMlp,          ExperimentKind::FreezeAblation,
      ExperimentKind::ValidateOp};
  return kinds;
}

inline ExperimentKind experiment_from_string(const std::string& s) {
  for (ExperimentKind k : all_experiments())
    if (s == to_string(k)) return k;
  std::string msg = "unknown experiment '" + s + "'; valid:";
  for (ExperimentKind k : all_experiments()) msg += std::string(" ") + to_string(k);
  throw ConfigError(msg);
}

struct KeySpec {
  enum class Type { Long, Double, Bool, Str, Enum };
  std::string key;
  Type type = Type::Str;
  std::string def;
  double min = 0.0;
  double max = 0.0;  // min == max means unconstrained
  std::vector<std::string> allowed;  // Enum only
};

inline const std::vector<KeySpec>& config_registry() {
  using T = KeySpec::Type;
  static const std::vector<KeySpec> keys = {
      {"dataset.source", T::Enum, "synthetic", 0, 0, {"synthetic", "idx"}},
      {"dataset.synth_per_class", T::Long, "600", 1, 1e9, {}},
      {"dataset.synth_test_per_class", T::Long, "100", 0, 1e9, {}},
      {"dataset.synth_within_scale", T::Double, "0.06", 0, 1e9, {}},
      {"dataset.synth_grid_spacing", T::Double, "3.0", 0.01, 100, {}},
      {"dataset.synth_radius_fraction", T::Double, "0.30", 0.01, 0.499, {}},
      {"dataset.subsample_fraction", T::Double, "0.1", 1e-9, 1, {}},
      {"dataset.noise_fraction", T::Double, "0.1", 0, 1, {}},
      {"mlp.hidden1", T::Long, "300", 1, 100000, {}},
      {"mlp.hidden2", T::Long, "100", 1, 100000, {}},
      {"mlp.lr", T::Double, "0.1", 1e-12, 100, {}},
      {"mlp.momentum", T::Double, "0.0", 0, 0.999999, {}},
      {"mlp.weight_decay", T::Double, "0.0", 0, 1, {}},
      {"mlp.batch_size", T::Long, "100", 1, 1000000, {}},
      {"mlp.max_epochs", T::Long, "2000", 1, 10000000, {}},
      {"mlp.target_acc", T::Double, "0.99", 0, 1, {}},
      {"gen.lr", T::Double, "0.1", 1e-12, 100, {}},
      {"gen.momentum", T::Double, "0.9", 0, 0.999999, {}},
      {"gen.weight_decay", T::Double, "0.0001", 0, 1, {}},
      {"gen.cosine", T::Bool, "true", 0, 0, {}},
      {"gen.generations", T::Long, "5", 1, 1000, {}},
      {"gen.epochs_per_gen", T::Long, "40", 1, 1000000, {}},
      {"gen.batch_size", T::Long, "100", 1, 1000000, {}},
      {"probe.interval", T::Long, "20", 1, 1000000, {}},
      {"probe.rate", T::Double, "0.5", 0, 1, {}},
      {"probe.margin_fraction", T::Double, "0.1", 0, 1, {}},
      {"probe.ops", T::Str, "ke-random-reinit,imp-rewind", 0, 0, {}},
      {"forget.llf_threshold", T::Long, "2", 0, 100, {}},
      {"forget.ke_rate", T::Double, "0.7", 0, 1, {}},
      {"freeze.threshold", T::Long, "1", 0, 100, {}},
      {"sflang.lr", T::Double, "0.001", 1e-12, 100, {}},
      {"sflang.max_iters", T::Long, "4000", 1, 10000000, {}},
      {"sflang.rate", T::Double, "0.5", 0, 1, {}},
      {"lewis.r1", T::Long, "4", 2, 1000, {}},
      {"lewis.r2", T::Long, "8", 2, 1000, {}},
      {"lewis.vocab", T::Long, "8", 2, 1000, {}},
      {"lewis.msg_len", T::Long, "2", 1, 16, {}},
      {"lewis.hidden", T::Long, "100", 1, 10000, {}},
      {"lewis.embed", T::Long, "32", 1, 10000, {}},
      {"lewis.batch_size", T::Long, "100", 1, 100000, {}},
      {"lewis.candidates", T::Long, "5", 2, 100000, {}},
      {"lewis.lambda_s", T::Double, "0.1", 0, 100, {}},
      {"lewis.lambda_r", T::Double, "0.1", 0, 100, {}},
      {"lewis.lr", T::Double, "0.001", 1e-12, 100, {}},
      {"lewis.iters_per_gen", T::Long, "3000", 0, 100000000, {}},
      {"lewis.generations", T::Long, "10", 1, 100000, {}},
      {"lewis.regime", T::Enum, "no-reset", 0, 0,
       {"no-reset", "reset-receiver", "pbf", "iterated-learning"}},
      {"lewis.baseline", T::Bool, "true", 0, 0, {}},
      {"lewis.log_interval", T::Long, "100", 1, 100000000, {}},
      {"lewis.imitation_iters", T::Long, "800", 0, 100000000, {}},
      {"lewis.interaction_iters", T::Long, "4000", 0, 100000000, {}},
      {"lewis.pbf_keep_fraction", T::Double, "0.1", 0, 1, {}},
      {"lewis.il_reset_receiver", T::Bool, "true", 0, 0, {}},
      {"validate.n_chance", T::Long, "20", 2, 100000, {}},
      {"validate.n_trials", T::Long, "5", 1, 100000, {}},
      {"validate.rate", T::Double, "0.5", 0, 1, {}},
  };
  return keys;
}

namespace detail {

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(const std::string& key) {
  int best = 1 << 30;
  std::string best_key;
  for (const auto& spec : config_registry()) {
    int d = edit_distance(key, spec.key);
    if (d < best) {
      best = d;
      best_key = spec.key;
    }
    // also suggest against the short name after the namespace dot
    auto dot = spec.key.find('.');
    if (dot != std::string::npos) {
      int d2 = edit_distance(key, spec.key.substr(dot + 1));
      if (d2 < best) {
        best = d2;
        best_key = spec.key;
      }
    }
  }
  return best_key;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class ExperimentConfig {
 public:
  ExperimentKind experiment = ExperimentKind::Lewis;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  std::map<std::string, std::string> values;  // resolved, canonical

  long get_long(const std::string& key) const { return std::stol(at(key)); }
  double get_double(const std::string& key) const { return std::stod(at(key)); }
  bool get_bool(const std::string& key) const { return at(key) == "true"; }
  const std::string& get_string(const std::string& key) const { return at(key); }

  std::string echo() const {
    std::ostringstream os;
    os << "experiment=" << to_string(experiment) << '\n';
    os << "seed=" << seed << '\n';
    for (const auto& [k, v] : values) os << k << '=' << v << '\n';
    return os.str();
  }

 private:
  const std::string& at(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("config: unregistered key '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline std::string canonicalize(const KeySpec& spec, const std::string& raw_in) {
  std::string raw = trim(raw_in);
  char buf[64];
  switch (spec.type) {
    case KeySpec::Type::Long: {
      long v = 0;
      std::size_t pos = 0;
      try {
        v = std::stol(raw, &pos);
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + spec.key + "' expects an integer, got '" + raw + "'");
      }
      if (pos != raw.size())
        throw ConfigError("config: key '" + spec.key + "' expects an integer, got '" + raw + "'");
      if (spec.min != spec.max && (v < spec.min || v > spec.max))
        throw ConfigError("config: key '" + spec.key + "' out of range: " + raw);
      std::snprintf(buf, sizeof(buf), "%ld", v);
      return buf;
    }
    case KeySpec::Type::Double: {
      double v = 0;
      std::size_t pos = 0;
      try {
        v = std::stod(raw, &pos);
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + spec.key + "' expects a real, got '" + raw + "'");
      }
      if (pos != raw.size())
        throw ConfigError("config: key '" + spec.key + "' expects a real, got '" + raw + "'");
      if (spec.min != spec.max && (v < spec.min || v > spec.max))
        throw ConfigError("config: key '" + spec.key + "' out of range: " + raw);
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return buf;
    }
    case KeySpec::Type::Bool: {
      if (raw == "true" || raw == "1") return "true";
      if (raw == "false" || raw == "0") return "false";
      throw ConfigError("config: key '" + spec.key + "' expects true/false, got '" + raw + "'");
    }
    case KeySpec::Type::Enum: {
      for (const auto& a : spec.allowed)
        if (raw == a) return raw;
      std::string msg = "config: key '" + spec.key + "' expects one of";
      for (const auto& a : spec.allowed) msg += " " + a;
      msg += ", got '" + raw + "'";
      throw ConfigError(msg);
    }
    case KeySpec::Type::Str:
      return raw;
  }
  return raw;
}

}  // namespace detail

// Builds a fully resolved config: registry defaults, then file entries, then
// --set overrides, all validated.
inline ExperimentConfig make_config(ExperimentKind experiment, std::uint64_t seed,
                                    const std::filesystem::path& out_dir,
                                    const std::optional<std::filesystem::path>& file,
                                    const std::vector<std::pair<std::string, std::string>>&
                                        overrides = {}) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  for (const auto& spec : config_registry())
    cfg.values[spec.key] = detail::canonicalize(spec, spec.def);

  auto apply = [&cfg](const std::string& key, const std::string& value) {
    for (const auto& spec : config_registry()) {
      if (spec.key == key) {
        cfg.values[key] = detail::canonicalize(spec, value);
        return;
      }
    }
    if (key == "experiment" || key == "seed" || key == "out")
      throw ConfigError("config: '" + key + "' is a command-line argument, not a config key");
    throw ConfigError("config: unknown key '" + key + "'; did you mean '" +
                      detail::nearest_key(key) + "'?");
  };

  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError("config: cannot read '" + file->string() + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string s = detail::trim(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
      apply(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    }
  }
  for (const auto& [k, v] : overrides) apply(k, v);
  return cfg;
}

}  // namespace relearn
