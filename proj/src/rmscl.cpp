// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/rmscl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "driftgate/errors.hpp"

namespace dg {

Dictionary::Dictionary(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

Dictionary::Dictionary(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows * cols, "Dictionary: value count does not match rows*cols");
  for (double v : values_) require(std::isfinite(v), "Dictionary: non-finite entry");
}

std::vector<double> Dictionary::apply(std::span<const double> psi) const {
  require(psi.size() == cols_, "Dictionary::apply: coefficient count does not match columns");
  std::vector<double> out(rows_, 0.0);
  for (std::size_t j = 0; j < cols_; ++j) {
    if (psi[j] == 0.0) continue;
    auto col = column(j);
    for (std::size_t i = 0; i < rows_; ++i) out[i] += psi[j] * col[i];
  }
  return out;
}

std::vector<double> Dictionary::correlate(std::span<const double> v) const {
  require(v.size() == rows_, "Dictionary::correlate: vector length does not match rows");
  std::vector<double> out(cols_, 0.0);
  for (std::size_t j = 0; j < cols_; ++j) {
    auto col = column(j);
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) s += col[i] * v[i];
    out[j] = s;
  }
  return out;
}

LassoSolution solve_nn_lasso(const LassoProblem& problem, const LassoOptions& options,
                             std::span<const double> warm_start) {
  const Dictionary& d = problem.dictionary;
  require(d.cols() > 0, "solve_nn_lasso: empty dictionary");
  require(problem.target.size() == d.rows(), "solve_nn_lasso: target length does not match dictionary rows");
  require(problem.lambda >= 0.0, "solve_nn_lasso: lambda must be nonnegative");

  LassoSolution sol;
  sol.psi.assign(d.cols(), 0.0);
  if (!warm_start.empty()) {
    require(warm_start.size() == d.cols(), "solve_nn_lasso: warm start length does not match columns");
    for (std::size_t j = 0; j < d.cols(); ++j) sol.psi[j] = std::max(0.0, warm_start[j]);
  }

  // Covariance form: rho_j = D_j^T target - sum_k G_jk psi_k + G_jj psi_j with
  // G = D^T D, so each coordinate step costs O(cols) instead of O(rows).
  const std::size_t m = d.cols();
  std::vector<double> gram(m * m);
  for (std::size_t j = 0; j < m; ++j) {
    auto cj = d.column(j);
    for (std::size_t k = j; k < m; ++k) {
      auto ck = d.column(k);
      double s = 0.0;
      for (std::size_t i = 0; i < cj.size(); ++i) s += cj[i] * ck[i];
      gram[j * m + k] = s;
      gram[k * m + j] = s;
    }
  }
  const std::vector<double> dt = d.correlate(problem.target);
  for (std::size_t j = 0; j < m; ++j) {
    if (gram[j * m + j] == 0.0) sol.psi[j] = 0.0;
  }
  // q = G psi, maintained incrementally.
  std::vector<double> q(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    if (sol.psi[j] == 0.0) continue;
    for (std::size_t k = 0; k < m; ++k) q[k] += gram[k * m + j] * sol.psi[j];
  }

  for (sol.sweeps = 1; sol.sweeps <= options.max_sweeps; ++sol.sweeps) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double z = gram[j * m + j];
      if (z == 0.0) continue;
      const double rho = dt[j] - q[j] + z * sol.psi[j];
      const double updated = std::max(0.0, (rho - problem.lambda) / z);
      const double delta = updated - sol.psi[j];
      if (delta != 0.0) {
        const double* gj = &gram[j * m];
        for (std::size_t k = 0; k < m; ++k) q[k] += delta * gj[k];
        sol.psi[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < options.tolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.sweeps = std::min(sol.sweeps, options.max_sweeps);
  return sol;
}

double lasso_objective(const LassoProblem& problem, std::span<const double> psi) {
  const std::vector<double> fit = problem.dictionary.apply(psi);
  double rss = 0.0;
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const double r = problem.target[i] - fit[i];
    rss += r * r;
  }
  double l1 = 0.0;
  for (double p : psi) l1 += std::abs(p);
  return 0.5 * rss + problem.lambda * l1;
}

double lambda_max(const Dictionary& dictionary, std::span<const double> target) {
  double top = 0.0;
  for (double c : dictionary.correlate(target)) top = std::max(top, std::abs(c));
  return top;
}

std::vector<double> default_lambda_grid(const Dictionary& dictionary, std::span<const double> target,
                                        std::size_t count, double ratio) {
  require(count > 0, "default_lambda_grid: count must be positive");
  require(ratio > 0.0 && ratio < 1.0, "default_lambda_grid: ratio must lie in (0, 1)");
  const double top = lambda_max(dictionary, target);
  if (top == 0.0) return {0.0};
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = top;
    return grid;
  }
  const double log_top = std::log(top);
  const double log_bottom = std::log(top * ratio);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count - 1);
    grid[i] = std::exp(log_top + t * (log_bottom - log_top));
  }
  grid.front() = top;
  return grid;
}

double aic_score(double rss, std::size_t n, std::size_t support) {
  const double nn = static_cast<double>(n);
  return nn * std::log(std::max(rss, 1e-300) / nn) + 2.0 * static_cast<double>(support);
}

AicSelection select_lambda_aic(const Dictionary& dictionary, std::span<const double> target,
                               std::span<const double> lambda_grid, const LassoOptions& options) {
  std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
  if (grid.empty()) grid = default_lambda_grid(dictionary, target);

  LassoProblem problem{dictionary, std::vector<double>(target.begin(), target.end()), 0.0};
  AicSelection best;
  best.aic = std::numeric_limits<double>::infinity();
  std::vector<double> warm;
  for (double lambda : grid) {
    problem.lambda = lambda;
    LassoSolution sol = solve_nn_lasso(problem, options, warm);
    const std::vector<double> fit = dictionary.apply(sol.psi);
    AicPoint point;
    point.lambda = lambda;
    for (std::size_t i = 0; i < fit.size(); ++i) {
      const double r = problem.target[i] - fit[i];
      point.rss += r * r;
    }
    for (double p : sol.psi) {
      if (p > 0.0) ++point.support;
      point.l1 += p;
    }
    point.aic = aic_score(point.rss, target.size(), point.support);
    best.path.push_back(point);
    if (point.aic < best.aic || (point.aic == best.aic && lambda > best.lambda)) {
      best.aic = point.aic;
      best.lambda = lambda;
      best.psi = sol.psi;
    }
    warm = std::move(sol.psi);
  }
  return best;
}

WorkingMemory build_working_memory(const SampleMemory& memory, const FeatureGrid& next_feature,
                                   double decay_base, const SelectionConfig& cfg) {
  require(!memory.empty(), "build_working_memory: memory is empty");
  const auto& slots = memory.slots();
  require(next_feature.shape() == slots.front().feature.shape(),
          "build_working_memory: next feature shape differs from memory");

  const std::size_t plane = next_feature.height() * next_feature.width();
  Dictionary dict(plane, slots.size());
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const FeatureGrid pooled = channel_max_pool(slots[j].feature);
    auto v = pooled.values();
    std::copy(v.begin(), v.end(), dict.column(j).begin());
  }
  const FeatureGrid pooled_next = channel_max_pool(next_feature);
  auto target = pooled_next.values();

  const std::vector<double> grid = default_lambda_grid(dict, target, cfg.grid_size, cfg.grid_ratio);
  const AicSelection sel = select_lambda_aic(dict, target, grid, cfg.lasso);

  WorkingMemory wm;
  wm.lambda = sel.lambda;
  double top = 0.0;
  for (std::size_t j = 0; j < sel.psi.size(); ++j) {
    if (sel.psi[j] > 0.0) {
      ++wm.lasso_support;
      top = std::max(top, sel.psi[j]);
    }
  }

  if (wm.lasso_support == 0) {
    wm.fallback = true;
    const std::vector<double> d = memory.temporal_weights(decay_base);
    for (std::size_t j = 0; j < slots.size(); ++j) wm.entries.push_back({j, d[j]});
    return wm;
  }

  const double floor = cfg.ground_truth_floor * top;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    double psi = sel.psi[j];
    if (slots[j].is_ground_truth) psi = std::max(psi, floor);
    if (psi > 0.0) wm.entries.push_back({j, psi});
  }
  return wm;
}

}  // namespace dg
