// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "driftgate/errors.hpp"

namespace dg {

using nlohmann::json;

namespace {

// Reads `key` from `obj` into `out` when present, with a typed error.
template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    (void)v;
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ConfigError(where + ": unknown key '" + k + "'");
    }
  }
}

void positive(std::size_t v, const std::string& what) {
  if (v == 0) throw ConfigError(what + " must be positive");
}

void parse_stream(const json& j, StreamConfig& s, const std::filesystem::path& base_dir) {
  reject_unknown(j,
                 {"manifest", "segments", "frames_per_segment", "channels", "height", "width", "noise_sigma",
                  "support_channels", "appearance_spread", "disjoint_support", "channel_scale_spread",
                  "object_radius", "transition_frames", "holdout_per_segment"},
                 "stream");
  if (j.contains("manifest")) {
    std::string path;
    read_key(j, "manifest", path, "stream");
    std::filesystem::path p(path);
    s.manifest = p.is_absolute() ? p : base_dir / p;
  }
  auto& p = s.synthetic;
  read_key(j, "segments", p.segments, "stream");
  read_key(j, "frames_per_segment", p.frames_per_segment, "stream");
  read_key(j, "channels", p.dims.channels, "stream");
  read_key(j, "height", p.dims.height, "stream");
  read_key(j, "width", p.dims.width, "stream");
  read_key(j, "noise_sigma", p.noise_sigma, "stream");
  read_key(j, "support_channels", p.support_channels, "stream");
  read_key(j, "appearance_spread", p.appearance_spread, "stream");
  read_key(j, "disjoint_support", p.disjoint_support, "stream");
  read_key(j, "channel_scale_spread", p.channel_scale_spread, "stream");
  read_key(j, "object_radius", p.object_radius, "stream");
  read_key(j, "transition_frames", p.transition_frames, "stream");
  read_key(j, "holdout_per_segment", s.holdout_per_segment, "stream");
  positive(s.holdout_per_segment, "stream.holdout_per_segment");
  positive(p.segments, "stream.segments");
  positive(p.frames_per_segment, "stream.frames_per_segment");
}

StepRule parse_step_rule(const std::string& name) {
  if (name == "exact-line-search") return StepRule::ExactLineSearch;
  if (name == "fixed-rate") return StepRule::FixedRate;
  throw ConfigError("loss.step_rule: unknown rule '" + name + "'");
}

// Applies the settings in `j` on top of `cfg`.
void apply_method_settings(const json& j, MethodConfig& cfg, const std::string& where) {
  reject_unknown(j,
                 {"method", "label", "label_source", "prediction_threshold", "mas_gamma", "loss", "gate", "binarize",
                  "selection"},
                 where);
  try {
    if (j.contains("method")) cfg.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("label_source")) cfg.label_source = parse_label_source(j.at("label_source").get<std::string>());
  } catch (const ContractViolation& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception&) {
    throw ConfigError(where + ": method and label_source must be strings");
  }
  read_key(j, "prediction_threshold", cfg.prediction_threshold, where);
  read_key(j, "mas_gamma", cfg.mas_gamma, where);
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    const std::string w = where + ".loss";
    reject_unknown(l,
                   {"l2_lambda", "epochs_per_update", "initial_epochs", "learning_rate", "temporal_decay_base",
                    "step_rule", "gate_gamma"},
                   w);
    read_key(l, "l2_lambda", cfg.loss.l2_lambda, w);
    read_key(l, "epochs_per_update", cfg.loss.epochs_per_update, w);
    read_key(l, "initial_epochs", cfg.loss.initial_epochs, w);
    read_key(l, "learning_rate", cfg.loss.learning_rate, w);
    read_key(l, "temporal_decay_base", cfg.loss.temporal_decay_base, w);
    if (l.contains("step_rule")) {
      std::string rule;
      read_key(l, "step_rule", rule, w);
      cfg.loss.step_rule = parse_step_rule(rule);
    }
    if (l.contains("gate_gamma")) {
      const json& g = l.at("gate_gamma");
      if (g.is_string() && g.get<std::string>() == "inf") {
        cfg.loss.gate_gamma = std::numeric_limits<double>::infinity();
      } else {
        read_key(l, "gate_gamma", cfg.loss.gate_gamma, w);
      }
    }
  }
  if (j.contains("gate")) {
    const json& g = j.at("gate");
    const std::string w = where + ".gate";
    reject_unknown(g, {"xi_lower", "xi_upper", "pin_first"}, w);
    read_key(g, "xi_lower", cfg.gate.xi_lower, w);
    read_key(g, "xi_upper", cfg.gate.xi_upper, w);
    read_key(g, "pin_first", cfg.gate.pin_first, w);
  }
  if (j.contains("binarize")) {
    const json& b = j.at("binarize");
    const std::string w = where + ".binarize";
    reject_unknown(b, {"percentile", "h_lower", "h_upper"}, w);
    read_key(b, "percentile", cfg.binarize.percentile, w);
    read_key(b, "h_lower", cfg.binarize.h_lower, w);
    read_key(b, "h_upper", cfg.binarize.h_upper, w);
  }
  if (j.contains("selection")) {
    const json& s = j.at("selection");
    const std::string w = where + ".selection";
    reject_unknown(s, {"ground_truth_floor", "grid_size", "grid_ratio", "lasso_tolerance", "lasso_max_sweeps"}, w);
    read_key(s, "ground_truth_floor", cfg.selection.ground_truth_floor, w);
    read_key(s, "grid_size", cfg.selection.grid_size, w);
    read_key(s, "grid_ratio", cfg.selection.grid_ratio, w);
    read_key(s, "lasso_tolerance", cfg.selection.lasso.tolerance, w);
    read_key(s, "lasso_max_sweeps", cfg.selection.lasso.max_sweeps, w);
  }
}

// A grid axis: a list of values or the string "standard".
std::vector<std::size_t> parse_axis(const json& j, const std::vector<std::size_t>& standard, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "standard") return standard;
    throw ConfigError(where + ": expected a list or \"standard\"");
  }
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty list");
  std::vector<std::size_t> out;
  for (const json& v : j) {
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) throw ConfigError(where + ": values must be positive");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::vector<std::optional<std::size_t>> parse_capacity_axis(const json& j) {
  std::vector<std::optional<std::size_t>> out;
  if (j.is_string() && j.get<std::string>() == "standard") {
    for (std::size_t p : kStandardGateCapacityGrid) out.emplace_back(p);
    return out;
  }
  if (!j.is_array() || j.empty()) throw ConfigError("sweep.gate_capacity: expected a nonempty list or \"standard\"");
  for (const json& v : j) {
    if (v.is_string() && v.get<std::string>() == "dynamic") {
      out.emplace_back(std::nullopt);
    } else if (v.is_number_unsigned() && v.get<std::size_t>() > 0) {
      out.emplace_back(v.get<std::size_t>());
    } else {
      throw ConfigError("sweep.gate_capacity: values must be positive integers or \"dynamic\"");
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("DG_SEED: bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("DG_SEED: empty seed list");
  return seeds;
}

std::string capacity_text(const std::optional<std::size_t>& p) { return p ? std::to_string(*p) : "dynamic"; }

json capacity_json(const std::optional<std::size_t>& p) { return p ? json(*p) : json("dynamic"); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json report_json(const TrainReport& r) {
  return json{{"update_step", r.update_step},
              {"frame", r.frame_index},
              {"losses", r.losses},
              {"frozen_count", r.frozen_count},
              {"gate_memory_size", r.gate_memory_size},
              {"gate_maps_dropped", r.gate_maps_dropped},
              {"gate_popcount", r.gate_popcount},
              {"gate_skipped", r.gate_skipped},
              {"working_memory_size", r.working_memory_size},
              {"memory_size", r.memory_size},
              {"lambda", r.lambda},
              {"lasso_support", r.lasso_support},
              {"fallback", r.fallback},
              {"psi", r.psi},
              {"batch_frames", r.batch_frames},
              {"duration_ms", r.duration_ms}};
}

json record_json(const ExperimentConfig& config, const RunRecord& rec) {
  json reports = json::array();
  for (const auto& r : rec.reports) reports.push_back(report_json(r));
  return json{{"method", rec.row.method},
              {"algorithm", to_string(config.methods[rec.point.method_index].config.method)},
              {"delta", rec.point.delta},
              {"memory_size", rec.point.memory_size},
              {"gate_capacity", capacity_json(rec.point.gate_capacity)},
              {"seed", rec.point.seed},
              {"status", rec.row.ok ? "ok" : "failed"},
              {"error", rec.row.error},
              {"j_matrix", rec.j_matrix},
              {"reports", reports}};
}

void fill_delta_std(std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, std::size_t, std::string, std::uint64_t>, std::vector<double>> groups;
  auto key = [](const ResultRow& r) {
    return std::make_tuple(r.method, r.memory_size, capacity_text(r.gate_capacity), r.seed);
  };
  for (const auto& r : rows) {
    if (r.ok) groups[key(r)].push_back(r.mean_j);
  }
  for (auto& r : rows) r.j_std_delta = r.ok ? population_std(groups[key(r)]) : 0.0;
}

json summary_json(const std::vector<ResultRow>& rows) {
  struct Group {
    std::string method;
    std::size_t memory_size = 0;
    std::optional<std::size_t> capacity;
    std::size_t rows = 0;
    std::size_t failed = 0;
    std::vector<std::size_t> deltas;
    std::map<std::size_t, std::vector<double>> j;
    std::map<std::size_t, std::vector<double>> forgetting;
  };
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.method == r.method && g.memory_size == r.memory_size && g.capacity == r.gate_capacity;
    });
    if (it == groups.end()) {
      Group g;
      g.method = r.method;
      g.memory_size = r.memory_size;
      g.capacity = r.gate_capacity;
      groups.push_back(std::move(g));
      it = groups.end() - 1;
    }
    ++it->rows;
    if (!r.ok) {
      ++it->failed;
      continue;
    }
    if (!it->j.count(r.delta_c)) it->deltas.push_back(r.delta_c);
    it->j[r.delta_c].push_back(r.mean_j);
    it->forgetting[r.delta_c].push_back(r.forgetting);
  }
  json out = json::array();
  for (const auto& g : groups) {
    std::vector<double> per_delta;
    std::vector<double> per_delta_forgetting;
    json deltas = json::array();
    for (std::size_t d : g.deltas) {
      per_delta.push_back(mean_of(g.j.at(d)));
      per_delta_forgetting.push_back(mean_of(g.forgetting.at(d)));
      deltas.push_back(json{{"delta", d}, {"mean_j", per_delta.back()}, {"seeds", g.j.at(d).size()}});
    }
    out.push_back(json{{"method", g.method},
                       {"memory_size", g.memory_size},
                       {"gate_capacity", capacity_json(g.capacity)},
                       {"rows", g.rows},
                       {"failed", g.failed},
                       {"mean_j", mean_of(per_delta)},
                       {"std_j", population_std(per_delta)},
                       {"forgetting", mean_of(per_delta_forgetting)},
                       {"per_delta", deltas}});
  }
  return json{{"groups", out}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::unique_ptr<FrameSource> make_source(const StreamConfig& stream, std::uint64_t seed) {
  if (stream.manifest) return std::make_unique<ManifestSource>(*stream.manifest);
  DriftStreamParams p = stream.synthetic;
  p.seed = seed;
  return std::make_unique<SyntheticSource>(make_drift_stream_spec(p), stream.holdout_per_segment);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"stream", "defaults", "methods", "sweep", "seeds", "output_dir", "out_channels", "jobs"}, "config");

  ExperimentConfig cfg;
  if (j.contains("stream")) parse_stream(j.at("stream"), cfg.stream, base_dir);

  MethodConfig defaults;
  if (j.contains("defaults")) apply_method_settings(j.at("defaults"), defaults, "defaults");

  if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty()) {
    throw ConfigError("config.methods: expected a nonempty list");
  }
  std::set<std::string> labels;
  for (std::size_t i = 0; i < j.at("methods").size(); ++i) {
    const json& m = j.at("methods")[i];
    const std::string where = "methods[" + std::to_string(i) + "]";
    MethodEntry entry{"", defaults};
    if (m.is_string()) {
      try {
        entry.config.method = parse_method(m.get<std::string>());
      } catch (const ContractViolation& e) {
        throw ConfigError(where + ": " + e.what());
      }
    } else {
      if (!m.is_object() || !m.contains("method")) throw ConfigError(where + ": needs a method name");
      apply_method_settings(m, entry.config, where);
      read_key(m, "label", entry.label, where);
    }
    if (entry.label.empty()) entry.label = to_string(entry.config.method);
    if (!labels.insert(entry.label).second) throw ConfigError(where + ": duplicate label '" + entry.label + "'");
    cfg.methods.push_back(std::move(entry));
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    reject_unknown(s, {"delta", "memory_size", "gate_capacity"}, "sweep");
    if (s.contains("delta")) cfg.sweep.delta = parse_axis(s.at("delta"), kStandardDeltaGrid, "sweep.delta");
    if (s.contains("memory_size")) {
      cfg.sweep.memory_size = parse_axis(s.at("memory_size"), kStandardMemoryGrid, "sweep.memory_size");
    }
    if (s.contains("gate_capacity")) cfg.sweep.gate_capacity = parse_capacity_axis(s.at("gate_capacity"));
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("config.seeds: expected a nonempty list");
    cfg.seeds.clear();
    for (const json& v : s) {
      if (!v.is_number_unsigned()) throw ConfigError("config.seeds: seeds must be nonnegative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  std::string out_dir;
  read_key(j, "output_dir", out_dir, "config");
  if (!out_dir.empty()) {
    std::filesystem::path p(out_dir);
    cfg.output_dir = p.is_absolute() ? p : base_dir / p;
  }
  read_key(j, "out_channels", cfg.out_channels, "config");
  read_key(j, "jobs", cfg.jobs, "config");
  positive(cfg.out_channels, "config.out_channels");
  positive(cfg.jobs, "config.jobs");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

void apply_seed_override(ExperimentConfig& config) {
  const char* env = std::getenv("DG_SEED");
  if (env == nullptr || *env == '\0') return;
  config.seeds = parse_seed_list(env);
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& config) {
  std::vector<GridPoint> grid;
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (std::size_t d : config.sweep.delta) {
      for (std::size_t n : config.sweep.memory_size) {
        for (const auto& p : config.sweep.gate_capacity) {
          for (std::uint64_t s : config.seeds) grid.push_back(GridPoint{m, d, n, p, s});
        }
      }
    }
  }
  return grid;
}

RunRecord run_grid_point(const ExperimentConfig& config, const GridPoint& point) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.point = point;
  ResultRow& row = rec.row;
  row.method = config.methods.at(point.method_index).label;
  row.delta_c = point.delta;
  row.delta_m = point.delta;
  row.memory_size = point.memory_size;
  row.gate_capacity = point.gate_capacity;
  row.seed = point.seed;
  try {
    MethodConfig cfg = config.methods[point.method_index].config;
    cfg.delta_c = point.delta;
    cfg.delta_m = point.delta;
    cfg.memory_capacity = point.memory_size;
    cfg.gate.fixed_capacity = point.gate_capacity;

    const auto source = make_source(config.stream, point.seed);
    RunOptions options;
    options.out_channels = config.out_channels;
    options.keep_predictions = false;
    RunResult run = run_stream(*source, cfg, options);
    rec.j_matrix = evaluate(run.snapshots, source->holdouts());
    rec.reports = std::move(run.reports);

    row.mean_j = mean_retrospective_jaccard(rec.j_matrix);
    row.final_j = mean_of(rec.j_matrix.back());
    row.forgetting = rec.j_matrix.back().size() >= 2 ? forgetting_score(rec.j_matrix) : 0.0;
    row.updates = rec.reports.size();
    double frozen_total = 0.0;
    for (const auto& r : rec.reports) {
      frozen_total += static_cast<double>(r.frozen_count);
      row.frozen_max = std::max(row.frozen_max, r.frozen_count);
    }
    if (!rec.reports.empty()) {
      row.frozen_mean = frozen_total / static_cast<double>(rec.reports.size());
      row.frozen_final = rec.reports.back().frozen_count;
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
    rec.j_matrix.clear();
    rec.reports.clear();
  }
  row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string results_csv_text(const std::vector<ResultRow>& rows) {
  std::string out =
      "method,delta_c,delta_m,memory_size,gate_capacity,seed,status,mean_j,j_std_delta,final_j,forgetting,"
      "updates,frozen_mean,frozen_max,frozen_final,error\r\n";
  for (const auto& r : rows) {
    const std::vector<std::string> fields{csv_field(r.method),
                                          std::to_string(r.delta_c),
                                          std::to_string(r.delta_m),
                                          std::to_string(r.memory_size),
                                          capacity_text(r.gate_capacity),
                                          std::to_string(r.seed),
                                          r.ok ? "ok" : "failed",
                                          format_double(r.mean_j),
                                          format_double(r.j_std_delta),
                                          format_double(r.final_j),
                                          format_double(r.forgetting),
                                          std::to_string(r.updates),
                                          format_double(r.frozen_mean),
                                          std::to_string(r.frozen_max),
                                          std::to_string(r.frozen_final),
                                          csv_field(r.error)};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out += ',';
      out += fields[i];
    }
    out += "\r\n";
  }
  return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  require(!config.methods.empty(), "run_experiment: no methods");
  const std::vector<GridPoint> grid = expand_grid(config);
  std::filesystem::create_directories(config.output_dir);

  ExperimentOutput output;
  output.results_csv = config.output_dir / "results.csv";
  output.timings_csv = config.output_dir / "timings.csv";
  output.metrics_jsonl = config.output_dir / "metrics.jsonl";
  output.summary_json = config.output_dir / "summary.json";

  std::ofstream metrics(output.metrics_jsonl, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + output.metrics_jsonl.string());

  // Collector: workers hand in finished records; metrics lines are written in
  // grid order as soon as the prefix is complete.
  std::mutex mu;
  std::map<std::size_t, RunRecord> pending;
  std::size_t next_to_write = 0;
  std::vector<ResultRow> rows(grid.size());
  auto collect = [&](std::size_t index, RunRecord rec) {
    std::lock_guard<std::mutex> lock(mu);
    rows[index] = rec.row;
    pending.emplace(index, std::move(rec));
    while (!pending.empty() && pending.begin()->first == next_to_write) {
      metrics << record_json(config, pending.begin()->second).dump() << '\n';
      metrics.flush();
      pending.erase(pending.begin());
      ++next_to_write;
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) collect(i, run_grid_point(config, grid[i]));
  };
  const std::size_t width = std::max<std::size_t>(1, std::min(config.jobs, grid.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  metrics.close();

  fill_delta_std(rows);
  write_text(output.results_csv, results_csv_text(rows));

  std::string timings = "method,delta_c,delta_m,memory_size,gate_capacity,seed,runtime_ms\r\n";
  for (const auto& r : rows) {
    timings += csv_field(r.method) + "," + std::to_string(r.delta_c) + "," + std::to_string(r.delta_m) + "," +
               std::to_string(r.memory_size) + "," + capacity_text(r.gate_capacity) + "," + std::to_string(r.seed) +
               "," + format_short(r.runtime_ms) + "\r\n";
  }
  write_text(output.timings_csv, timings);
  write_text(output.summary_json, summary_json(rows).dump(2) + "\n");
  output.rows = std::move(rows);
  return output;
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::DeltaCurve: return "delta-curve";
    case PlotKind::MemoryCurve: return "memory-curve";
    case PlotKind::GatePopcount: return "gate-popcount";
    case PlotKind::MasCompare: return "mas-compare";
  }
  return "unknown";
}

PlotKind parse_plot_kind(const std::string& name) {
  for (PlotKind k : {PlotKind::DeltaCurve, PlotKind::MemoryCurve, PlotKind::GatePopcount, PlotKind::MasCompare}) {
    if (to_string(k) == name) return k;
  }
  throw ContractViolation("unknown plot kind '" + name + "'");
}

namespace {

struct CsvRow {
  std::string method;
  std::size_t delta = 0;
  std::size_t memory_size = 0;
  std::string capacity;
  bool ok = false;
  double mean_j = 0.0;
};

std::vector<CsvRow> load_results(const std::filesystem::path& dir) {
  const auto table = parse_csv(read_text(dir / "results.csv"));
  if (table.empty()) throw FormatError("results.csv: empty");
  const auto& header = table.front();
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("results.csv: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_method = col("method"), c_delta = col("delta_c"), c_n = col("memory_size"),
                    c_p = col("gate_capacity"), c_status = col("status"), c_j = col("mean_j");
  std::vector<CsvRow> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& t = table[i];
    if (t.size() != header.size()) throw FormatError("results.csv: row " + std::to_string(i) + " has wrong width");
    try {
      rows.push_back(CsvRow{t[c_method], std::stoul(t[c_delta]), std::stoul(t[c_n]), t[c_p], t[c_status] == "ok",
                            std::stod(t[c_j])});
    } catch (const std::logic_error&) {
      throw FormatError("results.csv: bad number in row " + std::to_string(i));
    }
  }
  return rows;
}

struct Series {
  std::string name;
  // x -> y samples, averaged on output.
  std::map<double, std::vector<double>> points;
};

Series& series_named(std::vector<Series>& all, const std::string& name) {
  for (auto& s : all) {
    if (s.name == name) return s;
  }
  all.push_back(Series{name, {}});
  return all.back();
}

std::string write_series(const std::vector<Series>& all) {
  std::string out = "series\tx\ty\n";
  for (const auto& s : all) {
    for (const auto& [x, ys] : s.points) out += s.name + "\t" + format_short(x) + "\t" + format_short(mean_of(ys)) + "\n";
  }
  return out;
}

}  // namespace

PlotOutput emit_plot_data(const std::filesystem::path& results_dir, PlotKind kind) {
  PlotOutput out;
  out.file = results_dir / ("plot_" + to_string(kind) + ".tsv");
  std::vector<Series> all;

  if (kind == PlotKind::GatePopcount) {
    std::ifstream in(results_dir / "metrics.jsonl");
    if (!in) throw FormatError("cannot read " + (results_dir / "metrics.jsonl").string());
    std::string line;
    std::size_t line_no = 0;
    std::string text = "series\tx\ty\n";
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::parse_error&) {
        out.warnings.push_back("metrics.jsonl line " + std::to_string(line_no) + " is not JSON; skipped");
        continue;
      }
      const std::string algo = rec.value("algorithm", "");
      if (algo != "grcl" && algo != "hybrid") continue;
      const json p = rec.value("gate_capacity", json("dynamic"));
      const std::string name = rec.value("method", algo) + " delta=" + std::to_string(rec.value("delta", 0)) +
                               " N=" + std::to_string(rec.value("memory_size", 0)) +
                               " P=" + (p.is_string() ? p.get<std::string>() : std::to_string(p.get<std::size_t>())) +
                               " seed=" + std::to_string(rec.value("seed", 0ULL));
      if (rec.value("status", "") != "ok") {
        out.warnings.push_back("run '" + name + "' failed; no series");
        continue;
      }
      for (const json& r : rec.at("reports")) {
        text += name + "\t" + std::to_string(r.at("update_step").get<std::uint64_t>()) + "\t" +
                std::to_string(r.at("frozen_count").get<std::size_t>()) + "\n";
      }
      ++out.series;
    }
    if (out.series == 0) out.warnings.push_back("no grcl or hybrid runs in metrics.jsonl");
    write_text(out.file, text);
    return out;
  }

  const std::vector<CsvRow> rows = load_results(results_dir);
  std::set<std::pair<std::size_t, std::string>> np_groups;
  std::set<std::string> capacities;
  for (const auto& r : rows) {
    np_groups.emplace(r.memory_size, r.capacity);
    capacities.insert(r.capacity);
  }
  for (const auto& r : rows) {
    if (kind == PlotKind::MasCompare && r.method != "mas" && r.method != "grcl") continue;
    std::string name = r.method;
    if (kind == PlotKind::MemoryCurve) {
      if (capacities.size() > 1) name += " P=" + r.capacity;
    } else if (np_groups.size() > 1) {
      name += " N=" + std::to_string(r.memory_size) + " P=" + r.capacity;
    }
    Series& s = series_named(all, name);
    if (!r.ok) {
      out.warnings.push_back("series '" + name + "' is missing a failed run at delta=" + std::to_string(r.delta) +
                             " N=" + std::to_string(r.memory_size));
      continue;
    }
    const double x = static_cast<double>(kind == PlotKind::MemoryCurve ? r.memory_size : r.delta);
    s.points[x].push_back(r.mean_j);
  }
  if (kind == PlotKind::MasCompare) {
    for (const char* m : {"mas", "grcl"}) {
      if (std::none_of(all.begin(), all.end(), [&](const Series& s) { return s.name.rfind(m, 0) == 0; })) {
        out.warnings.push_back(std::string("no ") + m + " rows in results.csv");
      }
    }
  }
  std::erase_if(all, [&](const Series& s) {
    if (!s.points.empty()) return false;
    out.warnings.push_back("series '" + s.name + "' has no successful runs");
    return true;
  });
  out.series = all.size();
  write_text(out.file, write_series(all));
  return out;
}

}  // namespace dg
