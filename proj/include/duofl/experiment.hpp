#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "duofl/config.hpp"
#include "duofl/oracle.hpp"
#include "duofl/simulation.hpp"

namespace duofl::experiment {

using config::ExperimentConfig;
using config::Scheme;

struct MetricsRow {
  std::uint32_t round = 0;
  std::string scheme;
  std::string attack;
  double byz_frac = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
  double online_round_ms = 0.0;
  double offline_ms = 0.0;
  std::uint64_t bytes_c2s = 0;
  std::uint64_t bytes_s0s1 = 0;
  std::uint64_t bytes_s1s0 = 0;
  std::uint64_t bytes_s2c = 0;
  std::uint64_t saturation_count = 0;
  int no_trust_flag = 0;
};

inline constexpr const char* kMetricsHeader =
    "round,scheme,attack,byz_frac,accuracy,loss,online_round_ms,offline_ms,"
    "bytes_c2s,bytes_s0s1,bytes_s1s0,bytes_s2c,saturation_count,no_trust_flag";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const MetricsRow& r) {
  std::string out;
  out += std::to_string(r.round) + "," + r.scheme + "," + r.attack + ",";
  out += format_double(r.byz_frac) + "," + format_double(r.accuracy) + ",";
  out += format_double(r.loss) + "," + format_double(r.online_round_ms) + ",";
  out += format_double(r.offline_ms) + "," + std::to_string(r.bytes_c2s) + ",";
  out += std::to_string(r.bytes_s0s1) + "," + std::to_string(r.bytes_s1s0) + ",";
  out += std::to_string(r.bytes_s2c) + "," + std::to_string(r.saturation_count) + ",";
  out += std::to_string(r.no_trust_flag);
  return out;
}

// Everything generated from an ExperimentConfig that the round loops need.
struct ExperimentData {
  learning::ModelSpec spec;
  std::vector<learning::Dataset> shards;
  learning::Dataset trusted;
  learning::Dataset test;
  attacks::AttackPlan plan;
  protocol::ProtocolParams params;
};

inline protocol::ProtocolParams protocol_params_from(const ExperimentConfig& cfg) {
  protocol::ProtocolParams p;
  p.n_clients = cfg.clients;
  p.rounds = cfg.rounds;
  p.selection_fraction = cfg.selection_fraction;
  p.fp = cfg.fixed_point();
  p.d = cfg.model_dim();
  p.k = cfg.resolved_k();
  p.compressed = cfg.scheme != Scheme::ours_uncompressed;
  p.kappa1 = cfg.kappa1;
  p.insecure_test_keys = cfg.insecure_test_keys;
  p.eta = cfg.eta;
  p.batch_size = cfg.batch_size;
  p.force_uniform_weights = cfg.force_uniform_weights;
  Rng seed_rng = Rng::from_u64(cfg.protocol_seed);
  p.protocol_seed = seed_rng.next_seed();
  return p;
}

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  data.spec = cfg.model_spec();
  data.params = protocol_params_from(cfg);
  auto train = learning::generate_synthetic(cfg.data_seed, cfg.samples, cfg.features,
                                            cfg.classes, cfg.separation, cfg.noise_std);
  auto scheme = cfg.partition == "iid"
                    ? learning::PartitionScheme::iid()
                    : learning::PartitionScheme::label_skew(cfg.alpha);
  auto shards = learning::partition(train, cfg.clients, scheme, mix64(cfg.data_seed, 11));
  data.plan = attacks::make_attack_plan(attacks::attack_from_name(cfg.attack),
                                        cfg.byzantine_fraction, cfg.clients,
                                        cfg.attack_seed, cfg.scale_c);
  data.shards = protocol::poison_labels_if_needed(std::move(shards), data.plan);
  data.trusted = learning::generate_synthetic(
      mix64(cfg.data_seed, 22), cfg.trusted_samples, cfg.features, cfg.classes,
      cfg.separation, cfg.noise_std, cfg.data_seed);
  data.test = learning::generate_synthetic(
      mix64(cfg.data_seed, 33), cfg.test_samples, cfg.features, cfg.classes,
      cfg.separation, cfg.noise_std, cfg.data_seed);
  return data;
}

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<protocol::RoundTranscript> transcripts;  // secure schemes only
  double final_accuracy = 0.0;
  double offline_ms = 0.0;
  std::uint64_t offline_bytes_s1_to_s0 = 0;
  std::filesystem::path metrics_path;
  std::filesystem::path transcripts_path;
  int exit_code = 0;
  std::string error;
};

namespace detail {

inline std::uint64_t low_seed(const protocol::ProtocolParams& p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p.protocol_seed[i]) << (8 * i);
  return v;
}

// Plaintext baseline loop sharing selection, batches and attacks with the
// secure path.
inline void run_plaintext(const ExperimentConfig& cfg, const ExperimentData& data,
                          ExperimentResult& result) {
  learning::Model model = learning::Model::random_init(
      data.spec, mix64(low_seed(data.params), 0x6d6f646c));
  for (std::uint32_t t = 0; t < cfg.rounds; ++t) {
    auto row_start = std::chrono::steady_clock::now();
    auto selected = protocol::select_clients(data.params, t);
    MetricsRow row;
    row.round = t;
    row.scheme = config::scheme_name(cfg.scheme);
    row.attack = cfg.attack;
    row.byz_frac = cfg.byzantine_fraction;
    if (!selected.empty()) {
      std::map<std::uint32_t, std::vector<double>> gradients;
      for (auto id : selected)
        gradients[id] = learning::compute_gradient(model, data.shards[id],
                                                   cfg.batch_size,
                                                   mix64(cfg.data_seed, id, t));
      protocol::apply_attack_plan(data.plan, t, selected, gradients);
      std::vector<std::vector<double>> grads;
      grads.reserve(selected.size());
      std::size_t byz_selected = 0;
      for (auto id : selected) {
        grads.push_back(gradients[id]);
        if (data.plan.is_attacker(id)) ++byz_selected;
      }
      std::vector<double> aggregate;
      bool no_trust = false;
      switch (cfg.scheme) {
        case Scheme::fltrust_plain: {
          auto g_std = learning::full_gradient(model, data.trusted);
          auto res = oracle::fltrust_plain(grads, g_std);
          aggregate = std::move(res.aggregate);
          no_trust = res.no_trust;
          break;
        }
        case Scheme::fedavg:
          aggregate = oracle::fedavg_plain(grads);
          break;
        case Scheme::krum:
          aggregate = oracle::krum_plain(grads, byz_selected);
          break;
        case Scheme::trimmed_mean:
          aggregate = oracle::trimmed_mean_plain(grads, byz_selected);
          break;
        default:
          throw config::ConfigError("not a plaintext scheme");
      }
      vec::add_scaled(model.w, aggregate, -cfg.eta);
      row.no_trust_flag = no_trust ? 1 : 0;
    }
    auto eval = learning::evaluate(model, data.test);
    row.accuracy = eval.accuracy;
    row.loss = eval.loss;
    auto row_end = std::chrono::steady_clock::now();
    row.online_round_ms =
        std::chrono::duration<double, std::milli>(row_end - row_start).count();
    result.rows.push_back(std::move(row));
  }
  if (!result.rows.empty()) result.final_accuracy = result.rows.back().accuracy;
}

inline void run_secure(const ExperimentConfig& cfg, ExperimentData data,
                       ExperimentResult& result) {
  protocol::SimulationSetup setup;
  setup.params = data.params;
  setup.model_spec = data.spec;
  setup.shards = std::move(data.shards);
  setup.trusted = std::move(data.trusted);
  setup.plan = data.plan;
  setup.transport = cfg.transport;
  setup.data_seed = cfg.data_seed;
  protocol::Simulation sim(std::move(setup));
  sim.initialize();
  result.offline_ms = sim.offline_ms();
  result.offline_bytes_s1_to_s0 = sim.offline_bytes_s1_to_s0();
  for (std::uint32_t t = 0; t < cfg.rounds; ++t) {
    auto tr = sim.run_round(t);
    MetricsRow row;
    row.round = t;
    row.scheme = config::scheme_name(cfg.scheme);
    row.attack = cfg.attack;
    row.byz_frac = cfg.byzantine_fraction;
    row.online_round_ms = tr.online_ms;
    row.offline_ms = t == 0 ? sim.offline_ms() : 0.0;
    row.bytes_c2s = tr.bytes.clients_to_s0;
    row.bytes_s0s1 = tr.bytes.s0_to_s1;
    row.bytes_s1s0 = tr.bytes.s1_to_s0;
    row.bytes_s2c = tr.bytes.s0_to_clients;
    row.saturation_count = tr.saturation_count;
    row.no_trust_flag = tr.no_trust ? 1 : 0;
    auto eval = learning::evaluate(sim.global_model(), data.test);
    row.accuracy = eval.accuracy;
    row.loss = eval.loss;
    bool failed = tr.failed;
    result.rows.push_back(std::move(row));
    result.transcripts.push_back(std::move(tr));
    if (failed) {
      result.exit_code = 1;
      result.error = result.transcripts.back().error;
      break;
    }
  }
  if (!result.rows.empty()) result.final_accuracy = result.rows.back().accuracy;
}

}  // namespace detail

inline void write_metrics(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics file: " + path);
  out << kMetricsHeader << "\n";
  for (const auto& row : result.rows) out << to_csv(row) << "\n";
}

inline void write_transcripts(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write transcript file: " + path);
  for (const auto& tr : result.transcripts) {
    auto bytes = tr.serialize();
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       bool write_files = true) {
  config::validate_config(cfg);
  ExperimentResult result;
  ExperimentData data = prepare_data(cfg);
  try {
    if (config::scheme_is_secure(cfg.scheme))
      detail::run_secure(cfg, std::move(data), result);
    else
      detail::run_plaintext(cfg, data, result);
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error = e.what();
  }
  if (write_files) {
    std::filesystem::path dir = cfg.resolved_output_dir();
    std::filesystem::create_directories(dir);
    result.metrics_path = dir / (cfg.name + "_metrics.csv");
    write_metrics(result, result.metrics_path.string());
    if (config::scheme_is_secure(cfg.scheme)) {
      result.transcripts_path = dir / (cfg.name + "_transcripts.bin");
      write_transcripts(result, result.transcripts_path.string());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark harness: per-ratio SecNorm timing, operation counts and
// S0<->S1 traffic, with the wire-format closed form for comparison.
// ---------------------------------------------------------------------------

struct BenchRow {
  double ratio = 1.0;
  std::uint32_t k = 0;
  double secnorm_ms = 0.0;
  double compression_ms = 0.0;
  double online_ms = 0.0;
  double offline_ms = 0.0;
  std::uint64_t secnorm_exp_ops = 0;
  std::uint64_t expected_exp_ops = 0;
  std::uint64_t measured_s0s1_bytes = 0;  // both directions, offline included
  std::uint64_t expected_s0s1_payload_bytes = 0;
  std::uint64_t mask_pack_bytes = 0;
  double speedup_vs_uncompressed = 0.0;
};

// Payload bytes (no framing) the wire formats imply for one experiment's
// S0<->S1 traffic. Ciphertexts are counted at their nominal |N^2| size.
inline std::uint64_t expected_s0s1_payload_bytes(std::uint64_t n_selected,
                                                 std::uint64_t d, std::uint64_t k,
                                                 std::uint64_t rounds,
                                                 unsigned kappa1,
                                                 unsigned residue_bytes) {
  std::uint64_t cipher_bytes = 4ull * kappa1 / 8;  // |N^2| = 4 * kappa1 bits
  std::uint64_t ct = 4 + cipher_bytes;             // length-prefixed
  std::uint64_t offline = n_selected * rounds * (4 + 4 + k * ct);  // ENC_MASK_PACK
  std::uint64_t norm_pairs = n_selected * (4 + ct + residue_bytes);
  std::uint64_t cos_p0 = n_selected * (4 + residue_bytes);
  std::uint64_t std_grad = 4 + d * residue_bytes;
  std::uint64_t weights = 4 + n_selected * 12 + 4 + d * residue_bytes;
  std::uint64_t global_to_s1 = 4 + d * residue_bytes;
  return offline + rounds * (norm_pairs + cos_p0 + std_grad + weights + global_to_s1);
}

struct BenchReport {
  std::vector<BenchRow> rows;
};

inline BenchReport bench(const ExperimentConfig& base_cfg,
                         const std::vector<double>& ratios = {1.0, 0.01, 0.001,
                                                              0.0001}) {
  BenchReport report;
  double uncompressed_secnorm_ms = 0.0;
  for (double ratio : ratios) {
    ExperimentConfig cfg = base_cfg;
    cfg.name = base_cfg.name + "_r" + format_double(ratio);
    if (ratio >= 1.0) {
      cfg.scheme = Scheme::ours_uncompressed;
      cfg.k = 0;
    } else {
      cfg.scheme = Scheme::ours_compressed;
      cfg.k = static_cast<std::uint32_t>(
          std::ceil(ratio * static_cast<double>(cfg.model_dim())));
      if (cfg.k == 0) cfg.k = 1;
    }
    ExperimentResult res = run_experiment(cfg, /*write_files=*/false);
    if (res.exit_code != 0)
      throw std::runtime_error("bench run failed: " + res.error);
    BenchRow row;
    row.ratio = ratio;
    row.k = cfg.resolved_k();
    row.offline_ms = res.offline_ms;
    std::uint64_t n_sel = 0;
    for (const auto& tr : res.transcripts) {
      row.secnorm_ms += tr.secnorm_ms;
      row.compression_ms += tr.compression_ms;
      row.online_ms += tr.online_ms;
      row.secnorm_exp_ops += tr.secnorm_exp_ops;
      row.measured_s0s1_bytes += tr.bytes.s0_to_s1 + tr.bytes.s1_to_s0;
      n_sel = tr.selected.size();
    }
    row.mask_pack_bytes = res.offline_bytes_s1_to_s0;
    row.measured_s0s1_bytes += res.offline_bytes_s1_to_s0;
    row.expected_exp_ops =
        (static_cast<std::uint64_t>(row.k) * n_sel + n_sel) * cfg.rounds;
    row.expected_s0s1_payload_bytes = expected_s0s1_payload_bytes(
        n_sel, cfg.model_dim(), row.k, cfg.rounds, cfg.kappa1,
        cfg.fixed_point().residue_bytes());
    report.rows.push_back(row);
  }
  for (auto& row : report.rows)
    if (row.ratio >= 1.0) uncompressed_secnorm_ms = row.secnorm_ms;
  for (auto& row : report.rows)
    row.speedup_vs_uncompressed =
        row.secnorm_ms > 0.0 ? uncompressed_secnorm_ms / row.secnorm_ms : 0.0;
  return report;
}

inline void write_bench_report(const BenchReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write bench report: " + path);
  out << "ratio,k,secnorm_ms,compression_ms,online_ms,offline_ms,secnorm_exp_ops,"
         "expected_exp_ops,measured_s0s1_bytes,expected_s0s1_payload_bytes,"
         "mask_pack_bytes,speedup_vs_uncompressed\n";
  for (const auto& r : report.rows) {
    out << format_double(r.ratio) << "," << r.k << "," << format_double(r.secnorm_ms)
        << "," << format_double(r.compression_ms) << "," << format_double(r.online_ms)
        << "," << format_double(r.offline_ms)
        << "," << r.secnorm_exp_ops << "," << r.expected_exp_ops << ","
        << r.measured_s0s1_bytes << "," << r.expected_s0s1_payload_bytes << ","
        << r.mask_pack_bytes << "," << format_double(r.speedup_vs_uncompressed)
        << "\n";
  }
}

}  // namespace duofl::experiment
