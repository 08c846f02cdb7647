// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "driftgate/errors.hpp"
#include "driftgate/sample_memory.hpp"

namespace dg {

std::string to_string(Method m) {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Mas: return "mas";
    case Method::Grcl: return "grcl";
    case Method::Rmscl: return "rmscl";
    case Method::Hybrid: return "hybrid";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Baseline, Method::Mas, Method::Grcl, Method::Rmscl, Method::Hybrid}) {
    if (to_string(m) == name) return m;
  }
  throw ContractViolation("unknown method '" + name + "'");
}

std::string to_string(LabelSource s) { return s == LabelSource::Prediction ? "prediction" : "ground-truth"; }

LabelSource parse_label_source(const std::string& name) {
  if (name == "prediction") return LabelSource::Prediction;
  if (name == "ground-truth") return LabelSource::GroundTruth;
  throw ContractViolation("unknown label source '" + name + "'");
}

namespace {

bool uses_gate(Method m) { return m == Method::Grcl || m == Method::Hybrid; }
bool uses_selection(Method m) { return m == Method::Rmscl || m == Method::Hybrid; }

class OnlineLearner {
 public:
  OnlineLearner(const MethodConfig& cfg, ModelShape shape, const RunOptions& options)
      : cfg_(cfg),
        options_(options),
        model_(shape),
        memory_(cfg.memory_capacity),
        gates_(shape.param_count(), cfg.gate),
        importance_(shape.param_count()) {}

  const TargetModel& model() const { return model_; }
  const SampleMemory& memory() const { return memory_; }

  void remember(const FeatureGrid& x, const MaskGrid& label, std::uint64_t frame, bool ground_truth) {
    memory_.insert(MemorySlot{x, label, frame, 0, ground_truth});
  }

  TrainReport update(const FeatureGrid& next_feature, std::uint64_t frame, int epochs) {
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    report.update_step = step_;
    report.frame_index = frame;
    report.memory_size = memory_.size();

    const auto& slots = memory_.slots();
    std::vector<TrainingSample> batch;
    if (uses_selection(cfg_.method)) {
      const WorkingMemory wm =
          build_working_memory(memory_, next_feature, cfg_.loss.temporal_decay_base, cfg_.selection);
      report.lambda = wm.lambda;
      report.lasso_support = wm.lasso_support;
      report.fallback = wm.fallback;
      for (const auto& e : wm.entries) {
        batch.push_back({&slots[e.slot].feature, &slots[e.slot].mask, e.psi});
        report.psi.push_back(e.psi);
        report.batch_frames.push_back(slots[e.slot].frame_index);
      }
    } else {
      const std::vector<double> d = memory_.temporal_weights(cfg_.loss.temporal_decay_base);
      for (std::size_t j = 0; j < slots.size(); ++j) {
        batch.push_back({&slots[j].feature, &slots[j].mask, d[j]});
        report.batch_frames.push_back(slots[j].frame_index);
      }
    }
    report.working_memory_size = batch.size();

    std::optional<GateMap> gate;
    std::vector<double> gate_importance;
    std::optional<AnchorPenalty> penalty;
    const std::vector<double> before(model_.weights().begin(), model_.weights().end());
    if (uses_gate(cfg_.method)) {
      gate = gates_.overall_gate();
      if (std::isfinite(cfg_.loss.gate_gamma)) {
        gate_importance.resize(gate->size());
        for (std::size_t k = 0; k < gate->size(); ++k) gate_importance[k] = gate->test(k) ? 1.0 : 0.0;
        penalty = AnchorPenalty{gate_importance, before, cfg_.loss.gate_gamma};
      }
    } else if (cfg_.method == Method::Mas && cfg_.mas_gamma != 0.0) {
      penalty = AnchorPenalty{importance_.omega(), before, cfg_.mas_gamma};
    }
    const bool hard_freeze = gate && !penalty;

    const UpdateResult result = train_update(model_, batch, cfg_.loss, hard_freeze ? &*gate : nullptr,
                                             penalty ? &*penalty : nullptr, epochs);
    report.losses = result.losses;
    report.frozen_count = result.frozen_count;

    importance_.begin_update();
    importance_.accumulate(result.data_grad_trace);
    if (uses_gate(cfg_.method)) {
      try {
        report.gate_maps_dropped =
            gates_.maintain(binarize(importance_.u(), cfg_.binarize, static_cast<std::int64_t>(step_)));
      } catch (const DegenerateInput&) {
        report.gate_skipped = true;
      }
      report.gate_memory_size = gates_.size();
      report.gate_popcount = gates_.overall_gate().popcount();
    }

    report.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (options_.observer) {
      options_.observer(UpdateEvent{report, before, model_.weights(), hard_freeze ? &*gate : nullptr});
    }
    memory_.tick();
    ++step_;
    return report;
  }

 private:
  const MethodConfig& cfg_;
  const RunOptions& options_;
  TargetModel model_;
  SampleMemory memory_;
  GateMemory gates_;
  ImportanceAccumulator importance_;
  std::uint64_t step_ = 0;
};

}  // namespace

RunResult run_stream(const FrameSource& source, const MethodConfig& cfg, const RunOptions& options) {
  require(cfg.delta_c > 0 && cfg.delta_m > 0, "run_stream: update intervals must be positive");
  require(source.length() > 0, "run_stream: empty stream");
  const ModelShape shape{options.out_channels, source.dims().channels};
  OnlineLearner learner(cfg, shape, options);

  RunResult run;
  const std::size_t n = source.length();
  if (options.keep_predictions) run.predictions.reserve(n);
  std::size_t previous_segment = 0;
  for (std::uint64_t f = 0; f < n; ++f) {
    const Frame frame = source.frame(f);
    const std::size_t segment = source.segment_of(f);
    if (f > 0 && segment != previous_segment) {
      run.snapshots.push_back(learner.model());
      run.snapshot_frames.push_back(f);
    }
    previous_segment = segment;

    if (f == 0) {
      learner.remember(frame.feature, frame.mask, f, true);
      run.reports.push_back(learner.update(frame.feature, f, cfg.loss.initial_epochs));
    } else if (f % cfg.delta_c == 0) {
      run.reports.push_back(learner.update(frame.feature, f, cfg.loss.epochs_per_update));
    }

    MaskGrid prediction = learner.model().forward(frame.feature).thresholded(cfg.prediction_threshold);
    if (f > 0 && f % cfg.delta_m == 0) {
      const MaskGrid& label = cfg.label_source == LabelSource::GroundTruth ? frame.mask : prediction;
      learner.remember(frame.feature, label, f, false);
    }
    run.peak_memory_slots = std::max(run.peak_memory_slots, learner.memory().size());
    if (options.keep_predictions) run.predictions.push_back(std::move(prediction));
  }
  run.snapshots.push_back(learner.model());
  run.snapshot_frames.push_back(n);
  run.final_model = learner.model();
  return run;
}

double jaccard(const MaskGrid& prediction, const MaskGrid& truth) {
  require(prediction.height() == truth.height() && prediction.width() == truth.width(),
          "jaccard: mask shapes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool a = prediction.values()[i] > 0.5;
    const bool b = truth.values()[i] > 0.5;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::vector<double>> evaluate(std::span<const TargetModel> snapshots,
                                          const std::vector<std::vector<Frame>>& holdouts, double threshold) {
  require(!snapshots.empty(), "evaluate: no snapshots");
  std::vector<std::vector<double>> j(snapshots.size(), std::vector<double>(holdouts.size(), 0.0));
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    for (std::size_t s = 0; s < holdouts.size(); ++s) {
      require(!holdouts[s].empty(), "evaluate: segment without holdout frames");
      double sum = 0.0;
      for (const Frame& fr : holdouts[s]) {
        sum += jaccard(snapshots[i].forward(fr.feature).thresholded(threshold), fr.mask);
      }
      j[i][s] = sum / static_cast<double>(holdouts[s].size());
    }
  }
  return j;
}

double forgetting_score(const std::vector<std::vector<double>>& j) {
  require(!j.empty(), "forgetting_score: empty matrix");
  const std::size_t segments = j.front().size();
  require(segments >= 2, "forgetting_score: needs at least two segments");
  double total = 0.0;
  for (std::size_t s = 0; s < segments; ++s) {
    double peak = j.front()[s];
    for (const auto& row : j) peak = std::max(peak, row[s]);
    total += peak - j.back()[s];
  }
  return total / static_cast<double>(segments);
}

double mean_retrospective_jaccard(const std::vector<std::vector<double>>& j) {
  require(!j.empty(), "mean_retrospective_jaccard: empty matrix");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    for (std::size_t s = 0; s <= i && s < j[i].size(); ++s) {
      total += j[i][s];
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace dg
