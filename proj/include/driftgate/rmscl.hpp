// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction-based memory selection. The channel-max-pooled next feature
// is reconstructed as a sparse nonnegative combination of the pooled stored
// features; slots with positive coefficients form the working memory and the
// coefficients become their training weights.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "driftgate/numerics.hpp"
#include "driftgate/sample_memory.hpp"

namespace dg {

/// Column-major dense dictionary: `cols` atoms of length `rows`.
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::size_t rows, std::size_t cols);
  Dictionary(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> column(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * rows_, rows_);
  }
  std::span<double> column(std::size_t j) { return std::span<double>(values_).subspan(j * rows_, rows_); }
  std::span<const double> values() const { return values_; }

  /// D * psi
  std::vector<double> apply(std::span<const double> psi) const;
  /// D^T * v
  std::vector<double> correlate(std::span<const double> v) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct LassoProblem {
  Dictionary dictionary;
  std::vector<double> target;
  double lambda = 0.0;
};

struct LassoOptions {
  double tolerance = 1e-8;
  int max_sweeps = 10000;
};

struct LassoSolution {
  std::vector<double> psi;
  int sweeps = 0;
  bool converged = false;
};

/// argmin_{psi >= 0} 1/2 ||target - D psi||^2 + lambda ||psi||_1 by cyclic
/// coordinate descent. `warm_start`, when non-empty, seeds psi.
LassoSolution solve_nn_lasso(const LassoProblem& problem, const LassoOptions& options = {},
                             std::span<const double> warm_start = {});

/// 1/2 ||target - D psi||^2 + lambda * sum |psi|
double lasso_objective(const LassoProblem& problem, std::span<const double> psi);

/// max_j |D_j^T target|
double lambda_max(const Dictionary& dictionary, std::span<const double> target);

/// `count` log-spaced values from lambda_max down to lambda_max * ratio.
/// A zero lambda_max yields the single grid point 0.
std::vector<double> default_lambda_grid(const Dictionary& dictionary, std::span<const double> target,
                                        std::size_t count = 30, double ratio = 1e-4);

struct AicPoint {
  double lambda = 0.0;
  double rss = 0.0;
  std::size_t support = 0;
  double aic = 0.0;
  double l1 = 0.0;
};

struct AicSelection {
  double lambda = 0.0;
  std::vector<double> psi;
  double aic = 0.0;
  std::vector<AicPoint> path;
};

/// AIC = n ln(RSS / n) + 2k, RSS floored at 1e-300, k = #{psi > 0}.
double aic_score(double rss, std::size_t n, std::size_t support);

/// Walks `lambda_grid` in the given order with warm starts and returns the
/// minimum-AIC point; ties go to the larger lambda. An empty grid uses
/// default_lambda_grid.
AicSelection select_lambda_aic(const Dictionary& dictionary, std::span<const double> target,
                               std::span<const double> lambda_grid = {}, const LassoOptions& options = {});

struct WorkingEntry {
  /// Index into SampleMemory::slots() at selection time.
  std::size_t slot = 0;
  double psi = 0.0;
};

struct WorkingMemory {
  std::vector<WorkingEntry> entries;
  double lambda = 0.0;
  std::size_t lasso_support = 0;
  /// No positive coefficient: entries hold every slot weighted by d_n.
  bool fallback = false;
};

struct SelectionConfig {
  /// Annotated-slot weight floor as a fraction of the largest selected psi.
  double ground_truth_floor = 0.1;
  std::size_t grid_size = 30;
  double grid_ratio = 1e-4;
  LassoOptions lasso;
};

/// Pools every slot and `next_feature` over channels, selects lambda by AIC
/// and keeps the slots with positive coefficients. The annotated slot is
/// always kept with weight at least floor * max(psi).
WorkingMemory build_working_memory(const SampleMemory& memory, const FeatureGrid& next_feature,
                                   double decay_base, const SelectionConfig& cfg = {});

}  // namespace dg
