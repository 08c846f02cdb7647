// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// driftgate run --config <path> [--jobs N] [--out DIR]
// driftgate plot --results DIR --kind KIND
// driftgate verify

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "driftgate/errors.hpp"
#include "driftgate/harness.hpp"
#include "driftgate/verify.hpp"

namespace {

constexpr int kExitConfig = 2;

int cmd_run(const std::string& config_path, std::size_t jobs, const std::string& out_dir) {
  dg::ExperimentConfig config;
  try {
    config = dg::load_experiment_config(config_path);
    dg::apply_seed_override(config);
  } catch (const dg::ConfigError& e) {
    std::cerr << "driftgate: " << e.what() << "\n";
    return kExitConfig;
  }
  if (jobs > 0) config.jobs = jobs;
  if (!out_dir.empty()) config.output_dir = out_dir;

  const dg::ExperimentOutput out = dg::run_experiment(config);
  std::size_t failed = 0;
  for (const auto& r : out.rows) failed += r.ok ? 0 : 1;
  std::cout << out.rows.size() << " runs, " << failed << " failed\n";
  for (const auto& r : out.rows) {
    if (!r.ok) std::cerr << "failed: " << r.method << " delta=" << r.delta_c << " seed=" << r.seed << ": " << r.error << "\n";
  }
  std::cout << "wrote " << out.results_csv.string() << ", " << out.metrics_jsonl.string() << ", "
            << out.summary_json.string() << ", " << out.timings_csv.string() << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_plot(const std::string& results, const std::string& kind_name) {
  dg::PlotKind kind;
  try {
    kind = dg::parse_plot_kind(kind_name);
  } catch (const dg::ContractViolation& e) {
    std::cerr << "driftgate: " << e.what() << "\n";
    return kExitConfig;
  }
  const dg::PlotOutput out = dg::emit_plot_data(results, kind);
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << out.file.string() << " (" << out.series << " series)\n";
  return 0;
}

int cmd_verify() {
  bool all = true;
  for (const auto& c : dg::run_oracle_suite()) {
    std::printf("%s %-18s %s [%.1f ms]\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str(), c.elapsed_ms);
    all = all && c.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning experiments for online target models"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::size_t jobs = 0;
  auto* run = app.add_subcommand("run", "Run an experiment sweep");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--jobs", jobs, "Worker count (overrides the config)");
  run->add_option("--out", out_dir, "Output directory (overrides the config)");

  std::string results, kind;
  auto* plot = app.add_subcommand("plot", "Write plot-ready TSV data from a results directory");
  plot->add_option("--results", results, "Results directory")->required();
  plot->add_option("--kind", kind, "delta-curve | memory-curve | gate-popcount | mas-compare")->required();

  auto* verify = app.add_subcommand("verify", "Run the oracle self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, jobs, out_dir);
    if (*plot) return cmd_plot(results, kind);
    if (*verify) return cmd_verify();
  } catch (const std::exception& e) {
    std::cerr << "driftgate: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
