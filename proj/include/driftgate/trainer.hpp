// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Online loop over a frame source: predict, store, and periodically refit the
// target model with one of the continual-learning methods.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftgate/feature_stream.hpp"
#include "driftgate/gate_map.hpp"
#include "driftgate/grcl.hpp"
#include "driftgate/rmscl.hpp"
#include "driftgate/target_model.hpp"

namespace dg {

enum class Method { Baseline, Mas, Grcl, Rmscl, Hybrid };

std::string to_string(Method m);
/// Accepts the lower-case names used in configs; throws ContractViolation.
Method parse_method(const std::string& name);

/// Where the masks stored in memory after frame 0 come from.
enum class LabelSource {
  /// Thresholded model predictions (self-training).
  Prediction,
  /// The stream's labels, standing in for a decoder that tracks the object.
  GroundTruth,
};

std::string to_string(LabelSource s);
LabelSource parse_label_source(const std::string& name);

struct MethodConfig {
  Method method = Method::Baseline;
  /// Target-model update interval.
  std::size_t delta_c = 1;
  /// Memory insert interval.
  std::size_t delta_m = 1;
  std::size_t memory_capacity = 32;
  LossConfig loss;
  GateMemoryConfig gate;
  BinarizeConfig binarize;
  double mas_gamma = 1.0;
  SelectionConfig selection;
  LabelSource label_source = LabelSource::GroundTruth;
  double prediction_threshold = 0.5;
};

struct TrainReport {
  std::uint64_t update_step = 0;
  /// Frame at which the update ran (0 for the annotated-frame fit).
  std::uint64_t frame_index = 0;
  std::vector<double> losses;
  std::size_t frozen_count = 0;
  std::size_t gate_memory_size = 0;
  std::size_t gate_maps_dropped = 0;
  /// Popcount of the overall gate after maintenance.
  std::size_t gate_popcount = 0;
  /// Samples in the batch the update trained on.
  std::size_t working_memory_size = 0;
  std::size_t memory_size = 0;
  double lambda = 0.0;
  std::size_t lasso_support = 0;
  bool fallback = false;
  std::vector<double> psi;
  /// Frames of the batch samples, aligned with psi for selection-based methods.
  std::vector<std::uint64_t> batch_frames;
  /// Set when the update produced no importance signal to binarize.
  bool gate_skipped = false;
  double duration_ms = 0.0;
};

/// Weights before and after one update plus the freeze mask it ran under.
struct UpdateEvent {
  const TrainReport& report;
  std::span<const double> before;
  std::span<const double> after;
  /// Null when the method does not freeze.
  const GateMap* freeze;
};

using UpdateObserver = std::function<void(const UpdateEvent&)>;

struct RunResult {
  std::vector<TrainReport> reports;
  /// Binary prediction for every frame, in stream order.
  std::vector<MaskGrid> predictions;
  /// Model before the first frame of every later segment and at stream end,
  /// so snapshots[i] is the model that has just finished segment i.
  std::vector<TargetModel> snapshots;
  /// Frame about to be processed when each snapshot was taken.
  std::vector<std::uint64_t> snapshot_frames;
  std::size_t peak_memory_slots = 0;
  TargetModel final_model;
};

struct RunOptions {
  /// Model shape; in_channels must equal the source's channel count.
  std::size_t out_channels = 1;
  /// Keep per-frame predictions (off for very long streams).
  bool keep_predictions = true;
  UpdateObserver observer;
};

/// Frame 0 seeds memory with its labels and fits the model for
/// loss.initial_epochs. For every later frame f: if f % delta_c == 0 the
/// model is updated (RMSCL selection uses X_f as the upcoming feature), then
/// X_f is predicted, then if f % delta_m == 0 the frame enters memory.
RunResult run_stream(const FrameSource& source, const MethodConfig& cfg, const RunOptions& options = {});

/// |a AND b| / |a OR b|; 1 when both are empty.
double jaccard(const MaskGrid& prediction, const MaskGrid& truth);

/// J[i][s]: mean Jaccard of snapshot i on segment s's holdout frames.
std::vector<std::vector<double>> evaluate(std::span<const TargetModel> snapshots,
                                          const std::vector<std::vector<Frame>>& holdouts,
                                          double threshold = 0.5);

/// mean_s (max_i J[i][s] - J[last][s]); needs at least two segments.
double forgetting_score(const std::vector<std::vector<double>>& j);

/// Mean of J[i][s] over s <= i: every segment scored by every model that had
/// already seen it. Expects one snapshot per segment.
double mean_retrospective_jaccard(const std::vector<std::vector<double>>& j);

}  // namespace dg
