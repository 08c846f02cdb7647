// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: config loading, sweeps over update interval,
// memory size and gate capacity, and the three result files.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftgate/feature_stream.hpp"
#include "driftgate/trainer.hpp"

namespace dg {

/// Unreadable or malformed experiment config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::size_t> kStandardDeltaGrid{1, 2, 4, 6, 8, 10};
inline const std::vector<std::size_t> kStandardMemoryGrid{8, 16, 32, 64, 128};
inline const std::vector<std::size_t> kStandardGateCapacityGrid{4, 20, 32, 64, 80, 128};

struct StreamConfig {
  /// Synthetic unless a manifest path is set.
  std::optional<std::filesystem::path> manifest;
  DriftStreamParams synthetic;
  std::size_t holdout_per_segment = kDefaultHoldoutPerSegment;
};

struct SweepConfig {
  std::vector<std::size_t> delta = kStandardDeltaGrid;
  std::vector<std::size_t> memory_size{32};
  /// nullopt is the dynamic gate memory.
  std::vector<std::optional<std::size_t>> gate_capacity{std::nullopt};
};

struct MethodEntry {
  /// Row name in the outputs; defaults to the method name and must be unique.
  std::string label;
  /// The sweep overrides the update intervals, N and P.
  MethodConfig config;
};

struct ExperimentConfig {
  StreamConfig stream;
  std::vector<MethodEntry> methods;
  SweepConfig sweep;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "results";
  std::size_t out_channels = 1;
  std::size_t jobs = 1;
};

/// Parses the JSON config text. Relative manifest paths resolve against
/// `base_dir`. Throws ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Replaces the seed list from DG_SEED ("7" or "1,2,3") when it is set.
void apply_seed_override(ExperimentConfig& config);

struct GridPoint {
  std::size_t method_index = 0;
  std::size_t delta = 1;
  std::size_t memory_size = 32;
  std::optional<std::size_t> gate_capacity;
  std::uint64_t seed = 1;
};

/// Method-major, then delta, N, P, seed.
std::vector<GridPoint> expand_grid(const ExperimentConfig& config);

struct ResultRow {
  /// Method label.
  std::string method;
  std::size_t delta_c = 0;
  std::size_t delta_m = 0;
  std::size_t memory_size = 0;
  std::optional<std::size_t> gate_capacity;
  std::uint64_t seed = 0;
  bool ok = false;
  /// Mean of J[i][s] over s <= i.
  double mean_j = 0.0;
  /// Population std of mean_j across the delta grid for this method, N, P and seed.
  double j_std_delta = 0.0;
  /// Mean J of the final model over all segments.
  double final_j = 0.0;
  double forgetting = 0.0;
  std::size_t updates = 0;
  double frozen_mean = 0.0;
  std::size_t frozen_max = 0;
  std::size_t frozen_final = 0;
  std::string error;
  double runtime_ms = 0.0;
};

struct RunRecord {
  GridPoint point;
  ResultRow row;
  std::vector<std::vector<double>> j_matrix;
  std::vector<TrainReport> reports;
};

/// Runs one grid point and scores it. Never throws; failures mark the row.
RunRecord run_grid_point(const ExperimentConfig& config, const GridPoint& point);

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::filesystem::path results_csv;
  std::filesystem::path timings_csv;
  std::filesystem::path metrics_jsonl;
  std::filesystem::path summary_json;
};

/// Executes every grid point on config.jobs workers and writes results.csv,
/// timings.csv, metrics.jsonl and summary.json under config.output_dir.
ExperimentOutput run_experiment(const ExperimentConfig& config);

/// RFC 4180 field quoting.
std::string csv_field(const std::string& value);
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Canonical results.csv text for `rows` (header included, runtime excluded).
std::string results_csv_text(const std::vector<ResultRow>& rows);

enum class PlotKind { DeltaCurve, MemoryCurve, GatePopcount, MasCompare };
std::string to_string(PlotKind kind);
PlotKind parse_plot_kind(const std::string& name);

struct PlotOutput {
  std::filesystem::path file;
  std::size_t series = 0;
  std::vector<std::string> warnings;
};

/// Writes plot_<kind>.tsv (columns series, x, y) under `results_dir`.
PlotOutput emit_plot_data(const std::filesystem::path& results_dir, PlotKind kind);

}  // namespace dg
