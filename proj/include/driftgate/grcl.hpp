// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gated regularisation: per-update gradient-magnitude importance, its
// binarisation into gate maps, the OR-combined overall gate and the dynamic
// gate memory that bounds how many parameters are frozen. The MAS penalty
// lives here too since it is driven by the same importance accumulator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "driftgate/gate_map.hpp"
#include "driftgate/target_model.hpp"

namespace dg {

/// u: importance of the current update (reset by begin_update).
/// omega: running sum of every update's u.
class ImportanceAccumulator {
 public:
  ImportanceAccumulator() = default;
  explicit ImportanceAccumulator(std::size_t param_count);

  void begin_update();
  /// u_k += sum_e |g_e,k| and omega_k gains the same amount.
  void accumulate(std::span<const std::vector<double>> grad_trace);

  std::span<const double> u() const { return u_; }
  std::span<const double> omega() const { return omega_; }
  std::size_t size() const { return u_.size(); }

 private:
  std::vector<double> u_;
  std::vector<double> omega_;
};

struct BinarizeConfig {
  double percentile = 99.5;
  /// Open interval the threshold is kept inside.
  double h_lower = 0.1;
  double h_upper = 0.55;
};

/// Threshold actually used by binarize: the percentile of u / max(u),
/// snapped 1e-9 inside the clamp interval when it falls outside.
double gate_threshold(std::span<const double> u, const BinarizeConfig& cfg = {});

/// bit_k = 1 iff u_k / max(u) > h. Throws DegenerateInput when max(u) <= 0.
GateMap binarize(std::span<const double> u, const BinarizeConfig& cfg = {}, std::int64_t step = 0);

struct GateMemoryConfig {
  double xi_lower = 0.07;
  double xi_upper = 0.15;
  /// Fixed capacity P; disables dynamic sizing when set.
  std::optional<std::size_t> fixed_capacity;
  /// Keep the first stored map (the one from the annotated-frame fit) forever.
  bool pin_first = true;
};

class GateMemory {
 public:
  GateMemory(std::size_t param_count, GateMemoryConfig cfg = {});

  /// Appends `map`, then drops the oldest droppable maps: in dynamic mode
  /// while popcount(overall) > eta_upper, in fixed mode while size > P.
  /// Returns how many maps were dropped.
  std::size_t maintain(GateMap map);

  /// Bitwise OR of all stored maps; all zeros when empty.
  GateMap overall_gate() const;

  double eta_lower() const { return cfg_.xi_lower * static_cast<double>(param_count_); }
  double eta_upper() const { return cfg_.xi_upper * static_cast<double>(param_count_); }

  std::size_t size() const { return maps_.size(); }
  bool empty() const { return maps_.empty(); }
  const std::deque<GateMap>& maps() const { return maps_; }
  std::size_t param_count() const { return param_count_; }
  const GateMemoryConfig& config() const { return cfg_; }

 private:
  bool drop_oldest();

  std::size_t param_count_;
  GateMemoryConfig cfg_;
  std::deque<GateMap> maps_;
  bool has_pinned_ = false;
};

/// gamma * 2 * omega_k * (theta_k - theta_prev_k), the gradient of the MAS
/// penalty gamma * sum_k omega_k (theta_k - theta_prev_k)^2.
std::vector<double> mas_penalty_grad(const TargetModel& model, std::span<const double> prev_weights,
                                     std::span<const double> omega, double gamma);

}  // namespace dg
