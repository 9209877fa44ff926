#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "duofl/attacks.hpp"
#include "duofl/encoding.hpp"
#include "duofl/jl.hpp"
#include "duofl/learning.hpp"
#include "duofl/transport.hpp"

namespace duofl::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme {
  ours_compressed,
  ours_uncompressed,
  fltrust_plain,
  fedavg,
  krum,
  trimmed_mean,
};

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ours_compressed: return "ours-compressed";
    case Scheme::ours_uncompressed: return "ours-uncompressed";
    case Scheme::fltrust_plain: return "fltrust-plain";
    case Scheme::fedavg: return "fedavg";
    case Scheme::krum: return "krum";
    case Scheme::trimmed_mean: return "trimmed-mean";
  }
  return "unknown";
}

inline Scheme scheme_from_name(const std::string& name) {
  for (Scheme s : {Scheme::ours_compressed, Scheme::ours_uncompressed,
                   Scheme::fltrust_plain, Scheme::fedavg, Scheme::krum,
                   Scheme::trimmed_mean}) {
    if (name == scheme_name(s)) return s;
  }
  throw ConfigError("unknown scheme: " + name);
}

inline bool scheme_is_secure(Scheme s) {
  return s == Scheme::ours_compressed || s == Scheme::ours_uncompressed;
}

// Fully resolved experiment description. Seeds are explicit: nothing in a
// run draws from ambient randomness.
struct ExperimentConfig {
  std::string name = "experiment";
  Scheme scheme = Scheme::ours_compressed;
  transport::TransportKind transport = transport::TransportKind::memory;

  std::uint32_t clients = 50;
  std::uint32_t rounds = 100;
  double selection_fraction = 0.1;

  // Data and model (synthetic classification at desk scale).
  std::uint32_t features = 64;
  std::uint32_t classes = 10;
  std::uint32_t hidden = 0;
  std::uint32_t samples = 5000;
  std::uint32_t test_samples = 1000;
  std::uint32_t trusted_samples = 100;  // |D_s|
  double separation = 3.0;
  double noise_std = 1.0;
  std::string partition = "iid";  // iid | label-skew
  double alpha = 0.5;
  std::uint32_t batch_size = 32;
  double eta = 0.1;

  // Crypto and encoding.
  unsigned kappa1 = 512;
  bool insecure_test_keys = false;
  unsigned kappa2 = 64;
  unsigned frac_bits = 14;
  unsigned weight_frac_bits = 20;
  double clip = 4.0;

  // Compression: explicit k wins; otherwise ceil(ratio * d) floored at
  // required_dimension(epsilon, delta) and capped at d.
  double compression_ratio = 0.01;
  std::uint32_t k = 0;
  double epsilon = 0.2;
  double delta = 0.01;

  // Attack plan.
  std::string attack = "none";
  double byzantine_fraction = 0.0;
  double scale_c = 6.0;

  // Seeds (mandatory; fixed defaults, never ambient).
  std::uint64_t data_seed = 1;
  std::uint64_t protocol_seed = 2;
  std::uint64_t attack_seed = 3;

  bool force_uniform_weights = false;
  std::string output_dir = "out";

  FixedPointParams fixed_point() const {
    return FixedPointParams{kappa2, frac_bits, weight_frac_bits, clip};
  }

  learning::ModelSpec model_spec() const {
    return learning::ModelSpec{features, classes, hidden};
  }

  std::uint32_t model_dim() const {
    return static_cast<std::uint32_t>(model_spec().dim());
  }

  std::uint32_t resolved_k() const {
    std::uint32_t d = model_dim();
    if (scheme == Scheme::ours_uncompressed) return d;
    if (k != 0) return std::min(k, d);
    auto target = static_cast<std::uint32_t>(
        std::ceil(compression_ratio * static_cast<double>(d)));
    target = std::max(target, jl::required_dimension(epsilon, delta));
    return std::min(target, d);
  }

  std::string resolved_output_dir() const {
    if (const char* env = std::getenv("DUOFL_OUTPUT_DIR"); env && *env) return env;
    return output_dir;
  }
};

namespace detail {

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "name", "scheme", "transport", "clients", "rounds", "selection_fraction",
      "features", "classes", "hidden", "samples", "test_samples", "trusted_samples",
      "separation", "noise_std", "partition", "alpha", "batch_size", "eta",
      "kappa1", "insecure_test_keys", "kappa2", "frac_bits", "weight_frac_bits",
      "clip", "compression_ratio", "k", "epsilon", "delta", "attack",
      "byzantine_fraction", "scale_c", "data_seed", "protocol_seed", "attack_seed",
      "force_uniform_weights", "output_dir"};
  return keys;
}

inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& k : known_keys())
      if (k == key) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown config key: " + key);
  }
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).template get<std::decay_t<decltype(out)>>();
  };
  std::string scheme_str, transport_str;
  if (j.contains("scheme")) {
    scheme_str = j.at("scheme").get<std::string>();
    cfg.scheme = scheme_from_name(scheme_str);
  }
  if (j.contains("transport")) {
    transport_str = j.at("transport").get<std::string>();
    if (transport_str == "memory")
      cfg.transport = transport::TransportKind::memory;
    else if (transport_str == "socket")
      cfg.transport = transport::TransportKind::socket;
    else
      throw ConfigError("unknown transport: " + transport_str);
  }
  get("name", cfg.name);
  get("clients", cfg.clients);
  get("rounds", cfg.rounds);
  get("selection_fraction", cfg.selection_fraction);
  get("features", cfg.features);
  get("classes", cfg.classes);
  get("hidden", cfg.hidden);
  get("samples", cfg.samples);
  get("test_samples", cfg.test_samples);
  get("trusted_samples", cfg.trusted_samples);
  get("separation", cfg.separation);
  get("noise_std", cfg.noise_std);
  get("partition", cfg.partition);
  get("alpha", cfg.alpha);
  get("batch_size", cfg.batch_size);
  get("eta", cfg.eta);
  get("kappa1", cfg.kappa1);
  get("insecure_test_keys", cfg.insecure_test_keys);
  get("kappa2", cfg.kappa2);
  get("frac_bits", cfg.frac_bits);
  get("weight_frac_bits", cfg.weight_frac_bits);
  get("clip", cfg.clip);
  get("compression_ratio", cfg.compression_ratio);
  get("k", cfg.k);
  get("epsilon", cfg.epsilon);
  get("delta", cfg.delta);
  get("attack", cfg.attack);
  get("byzantine_fraction", cfg.byzantine_fraction);
  get("scale_c", cfg.scale_c);
  get("data_seed", cfg.data_seed);
  get("protocol_seed", cfg.protocol_seed);
  get("attack_seed", cfg.attack_seed);
  get("force_uniform_weights", cfg.force_uniform_weights);
  get("output_dir", cfg.output_dir);
}

// "key=value" overrides reuse the JSON field parsing.
inline nlohmann::json override_to_json(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: " + kv);
  std::string key = kv.substr(0, eq);
  std::string value = kv.substr(eq + 1);
  nlohmann::json j;
  // Try JSON literal first (numbers, booleans); fall back to string.
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  if (!parsed.is_discarded() && !parsed.is_object() && !parsed.is_array())
    j[key] = parsed;
  else
    j[key] = value;
  return j;
}

}  // namespace detail

inline void sanity_check(const ExperimentConfig& cfg) {
  if (cfg.clients == 0) throw ConfigError("clients must be positive");
  if (cfg.classes < 2) throw ConfigError("classes must be at least 2");
  if (cfg.samples < cfg.clients) throw ConfigError("need at least one sample per client");
  if (cfg.selection_fraction < 0.0 || cfg.selection_fraction > 1.0)
    throw ConfigError("selection_fraction must be in [0, 1]");
  if (cfg.partition != "iid" && cfg.partition != "label-skew")
    throw ConfigError("partition must be iid or label-skew");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.clip <= 0.0) throw ConfigError("clip must be positive");
  if (cfg.frac_bits + static_cast<unsigned>(std::ceil(std::log2(cfg.clip < 2 ? 2.0 : cfg.clip))) > 50)
    throw ConfigError("frac_bits + log2(clip) too large for exact encoding");
  attacks::attack_from_name(cfg.attack);  // throws on junk
  if (cfg.byzantine_fraction < 0.0 || cfg.byzantine_fraction > 1.0)
    throw ConfigError("byzantine_fraction must be in [0, 1]");
}

// Validator gate for secure schemes; throws with the violated bound named
// and the minimal passing kappa2 suggested.
inline ValidationReport validate_config(const ExperimentConfig& cfg) {
  sanity_check(cfg);
  if (!scheme_is_secure(cfg.scheme)) return ValidationReport{true, "", {}};
  FixedPointParams fp = cfg.fixed_point();
  fp.modulus();  // enforce runnable kappa2
  unsigned n_bits = 2 * cfg.kappa1;
  ValidationReport report =
      cfg.scheme == Scheme::ours_uncompressed
          ? validate_parameters_uncompressed(cfg.model_dim(), cfg.clients, fp, n_bits)
          : validate_parameters(cfg.model_dim(), cfg.resolved_k(), cfg.clients, fp,
                                n_bits);
  if (!report.pass) {
    std::string msg = "parameter validation failed: " + report.summary();
    auto suggestion = suggest_min_kappa2(cfg.model_dim(), cfg.resolved_k(),
                                         cfg.clients, fp, n_bits);
    if (suggestion)
      msg += "; minimal passing kappa2 = " + std::to_string(*suggestion);
    throw ConfigError(msg);
  }
  return report;
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  ExperimentConfig cfg;
  bool only_space = true;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) only_space = false;
  if (!only_space) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::apply_json(cfg, j);
  }
  for (const auto& kv : overrides) detail::apply_json(cfg, detail::override_to_json(kv));
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const std::vector<std::string>& overrides = {}) {
  ExperimentConfig cfg;
  detail::apply_json(cfg, j);
  for (const auto& kv : overrides) detail::apply_json(cfg, detail::override_to_json(kv));
  validate_config(cfg);
  return cfg;
}

}  // namespace duofl::config
