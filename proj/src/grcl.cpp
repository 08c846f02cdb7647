// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/grcl.hpp"

#include <algorithm>
#include <cmath>

#include "driftgate/errors.hpp"
#include "driftgate/numerics.hpp"

namespace dg {

ImportanceAccumulator::ImportanceAccumulator(std::size_t param_count)
    : u_(param_count, 0.0), omega_(param_count, 0.0) {}

void ImportanceAccumulator::begin_update() { std::fill(u_.begin(), u_.end(), 0.0); }

void ImportanceAccumulator::accumulate(std::span<const std::vector<double>> grad_trace) {
  for (const auto& g : grad_trace) {
    require(g.size() == u_.size(), "accumulate_importance: gradient size does not match K");
  }
  for (const auto& g : grad_trace) {
    for (std::size_t k = 0; k < u_.size(); ++k) {
      const double m = std::abs(g[k]);
      u_[k] += m;
      omega_[k] += m;
    }
  }
}

double gate_threshold(std::span<const double> u, const BinarizeConfig& cfg) {
  require(!u.empty(), "binarize: empty importance vector");
  require(cfg.h_lower < cfg.h_upper, "binarize: empty threshold interval");
  const double top = *std::max_element(u.begin(), u.end());
  if (!(top > 0.0)) throw DegenerateInput("binarize: no importance signal");
  std::vector<double> normalized(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) normalized[k] = u[k] / top;
  double h = percentile(normalized, cfg.percentile);
  constexpr double kNudge = 1e-9;
  if (h >= cfg.h_upper) h = cfg.h_upper - kNudge;
  if (h <= cfg.h_lower) h = cfg.h_lower + kNudge;
  return h;
}

GateMap binarize(std::span<const double> u, const BinarizeConfig& cfg, std::int64_t step) {
  const double h = gate_threshold(u, cfg);
  const double top = *std::max_element(u.begin(), u.end());
  GateMap map(u.size(), step);
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (u[k] / top > h) map.set(k);
  }
  return map;
}

GateMemory::GateMemory(std::size_t param_count, GateMemoryConfig cfg)
    : param_count_(param_count), cfg_(cfg) {
  require(param_count > 0, "GateMemory: parameter count must be positive");
  require(cfg.xi_lower >= 0.0 && cfg.xi_lower <= cfg.xi_upper && cfg.xi_upper <= 1.0,
          "GateMemory: need 0 <= xi_lower <= xi_upper <= 1");
  require(!cfg.fixed_capacity || *cfg.fixed_capacity > 0, "GateMemory: fixed capacity must be positive");
}

bool GateMemory::drop_oldest() {
  const std::size_t first = (cfg_.pin_first && has_pinned_) ? 1 : 0;
  if (maps_.size() <= first) return false;
  maps_.erase(maps_.begin() + static_cast<std::ptrdiff_t>(first));
  return true;
}

std::size_t GateMemory::maintain(GateMap map) {
  require(map.size() == param_count_, "GateMemory::maintain: map size does not match K");
  maps_.push_back(std::move(map));
  if (maps_.size() == 1 && cfg_.pin_first) has_pinned_ = true;

  std::size_t dropped = 0;
  if (cfg_.fixed_capacity) {
    while (maps_.size() > *cfg_.fixed_capacity && drop_oldest()) ++dropped;
    return dropped;
  }
  // Below eta_lower nothing is dropped; the memory grows on later updates.
  while (static_cast<double>(overall_gate().popcount()) > eta_upper() && drop_oldest()) ++dropped;
  return dropped;
}

GateMap GateMemory::overall_gate() const {
  GateMap all(param_count_);
  for (const auto& m : maps_) all |= m;
  return all;
}

std::vector<double> mas_penalty_grad(const TargetModel& model, std::span<const double> prev_weights,
                                     std::span<const double> omega, double gamma) {
  const std::size_t k = model.param_count();
  require(prev_weights.size() == k && omega.size() == k, "mas_penalty_grad: size does not match K");
  std::vector<double> grad(k, 0.0);
  const AnchorPenalty penalty{omega, prev_weights, gamma};
  penalty.add_gradient(model.weights(), grad);
  return grad;
}

}  // namespace dg
