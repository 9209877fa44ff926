#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "duofl/experiment.hpp"
#include "duofl/selftest.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  auto cfg = duofl::config::parse_config(config_path, overrides);
  auto result = duofl::experiment::run_experiment(cfg);
  std::cout << "scheme=" << duofl::config::scheme_name(cfg.scheme)
            << " attack=" << cfg.attack << " rounds=" << result.rows.size()
            << " final_accuracy=" << result.final_accuracy << "\n";
  std::cout << "metrics: " << result.metrics_path.string() << "\n";
  if (!result.transcripts_path.empty())
    std::cout << "transcripts: " << result.transcripts_path.string() << "\n";
  if (result.exit_code != 0)
    std::cerr << "round failure: " << result.error << "\n";
  return result.exit_code;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& overrides,
              std::vector<double> ratios) {
  auto cfg = duofl::config::parse_config(config_path, overrides);
  if (ratios.empty()) ratios = {1.0, 0.01, 0.001, 0.0001};
  auto report = duofl::experiment::bench(cfg, ratios);
  std::filesystem::path dir = cfg.resolved_output_dir();
  std::filesystem::create_directories(dir);
  auto path = dir / (cfg.name + "_bench.csv");
  duofl::experiment::write_bench_report(report, path.string());
  std::printf("%10s %8s %14s %16s %18s %10s\n", "ratio", "k", "secnorm_ms",
              "exp_ops", "s0s1_bytes", "speedup");
  for (const auto& r : report.rows)
    std::printf("%10g %8u %14.3f %16llu %18llu %10.2f\n", r.ratio, r.k, r.secnorm_ms,
                static_cast<unsigned long long>(r.secnorm_exp_ops),
                static_cast<unsigned long long>(r.measured_s0s1_bytes),
                r.speedup_vs_uncompressed);
  std::cout << "report: " << path.string() << "\n";
  return 0;
}

int cmd_selftest(const std::string& inject_fault) {
  auto report = duofl::selftest::selftest(inject_fault);
  std::cout << report.summary();
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-server Byzantine-robust privacy-preserving federated learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "JSON config path")->required();
  run->add_option("--override", overrides, "key=value config overrides");

  std::string bench_config;
  std::vector<std::string> bench_overrides;
  std::vector<double> ratios;
  auto* bench = app.add_subcommand("bench", "compression-ratio benchmark grid");
  bench->add_option("--config", bench_config, "JSON config path")->required();
  bench->add_option("--override", bench_overrides, "key=value config overrides");
  bench->add_option("--ratios", ratios, "compression ratios (default 1.0 0.01 0.001 0.0001)");

  std::string inject;
  auto* selftest = app.add_subcommand("selftest", "fast invariant suite at tiny parameters");
  selftest->add_option("--inject-fault", inject,
                       "corrupt one module's check input (expect FAIL)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, overrides);
    if (bench->parsed()) return cmd_bench(bench_config, bench_overrides, ratios);
    if (selftest->parsed()) return cmd_selftest(inject);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
