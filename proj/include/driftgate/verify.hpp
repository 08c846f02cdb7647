// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles and the self-check suite behind `driftgate verify`.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "driftgate/rmscl.hpp"
#include "driftgate/target_model.hpp"

namespace dg {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst observed error (or the measured value for single-shot checks).
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t trials = 0;
  double elapsed_ms = 0.0;
  std::string detail;
};

/// Central differences of `f` at `x` with step h * (1 + |x_k|).
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-4);

/// Direct-formula objective: nested loops over pixels, taps and channels,
/// sharing no code with loss_and_grad.
double naive_objective(std::span<const double> theta, std::size_t out_channels, std::span<const TrainingSample> batch,
                       double l2_lambda, const AnchorPenalty* penalty = nullptr);

/// Accelerated projected gradient for the nonnegative LASSO.
std::vector<double> projected_gradient_lasso(const LassoProblem& problem, int max_iterations = 200000,
                                             double tolerance = 1e-14);

/// Largest KKT residual of `psi` for the nonnegative LASSO: |g_j + lambda|
/// on the support, max(0, -(g_j + lambda)) off it, and any negative entry.
double lasso_kkt_residual(const LassoProblem& problem, std::span<const double> psi);

/// unit_size_bits(512x30x52, 30x52, 64) / gate_unit_size_bits(16x512x3x3).
double canonical_unit_ratio();

CheckResult check_memory_accounting(double expected = 693.35, double tolerance = 0.01);

/// Random tiny instances (K <= 200) of the ridge data term with temporal
/// weights, the quadratic anchor penalty, and psi-weighted reconstruction;
/// worst relative error over significant components.
CheckResult check_gradients(std::size_t trials = 50, std::uint64_t seed = 1, double tolerance = 1e-4);

/// Random problems with up to 16 atoms of up to 32 dims; worst of the KKT
/// residual and the objective gap to the projected-gradient oracle.
CheckResult check_lasso(std::size_t problems = 100, std::uint64_t seed = 1, double tolerance = 1e-6);

std::vector<CheckResult> run_oracle_suite();

}  // namespace dg
