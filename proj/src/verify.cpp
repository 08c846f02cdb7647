// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "driftgate/errors.hpp"
#include "driftgate/grcl.hpp"
#include "driftgate/sample_memory.hpp"

namespace dg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

struct RandomInstance {
  std::size_t out_channels = 1;
  std::vector<FeatureGrid> features;
  std::vector<MaskGrid> labels;
  std::vector<double> weights;
  std::vector<double> theta;
};

RandomInstance random_instance(Rng& rng) {
  RandomInstance inst;
  inst.out_channels = 1 + rng.below(2);
  const GridShape g{1 + rng.below(4), 3 + rng.below(4), 3 + rng.below(4)};
  const std::size_t n = 1 + rng.below(3);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureGrid x(g);
    for (double& v : x.values()) v = rng.normal();
    MaskGrid y(g.height, g.width, MaskKind::BinaryLabel);
    for (double& v : y.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    inst.features.push_back(std::move(x));
    inst.labels.push_back(std::move(y));
    inst.weights.push_back(0.2 + rng.uniform());
  }
  inst.theta.resize(inst.out_channels * g.channels * 9);
  for (double& v : inst.theta) v = 0.3 * rng.normal();
  return inst;
}

std::vector<TrainingSample> batch_of(const RandomInstance& inst, std::span<const double> weights) {
  std::vector<TrainingSample> batch;
  for (std::size_t i = 0; i < inst.features.size(); ++i) batch.push_back({&inst.features[i], &inst.labels[i], weights[i]});
  return batch;
}

// Worst relative error over components with |g| >= 1e-3 * max|g|.
double worst_relative(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double m = std::max(std::abs(analytic[k]), std::abs(numeric[k]));
    if (m < 1e-3 * scale || m == 0.0) continue;
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / m);
  }
  return worst;
}

}  // namespace

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double step = h * (1.0 + std::abs(x[k]));
    point[k] = x[k] + step;
    const double up = f(point);
    point[k] = x[k] - step;
    const double down = f(point);
    point[k] = x[k];
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

double naive_objective(std::span<const double> theta, std::size_t out_channels, std::span<const TrainingSample> batch,
                       double l2_lambda, const AnchorPenalty* penalty) {
  double total = 0.0;
  for (const auto& s : batch) {
    const FeatureGrid& x = *s.feature;
    const std::size_t c_in = x.channels(), h = x.height(), w = x.width();
    std::size_t pos = 0;
    for (double v : s.label->values()) pos += v > 0.5 ? 1 : 0;
    const double n = static_cast<double>(h * w);
    for (std::size_t py = 0; py < h; ++py) {
      for (std::size_t px = 0; px < w; ++px) {
        double score = 0.0;
        for (std::size_t o = 0; o < out_channels; ++o) {
          for (std::size_t c = 0; c < c_in; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const long yy = static_cast<long>(py) + ky - 1;
                const long xx = static_cast<long>(px) + kx - 1;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                score += theta[((o * c_in + c) * 3 + ky) * 3 + kx] * x.at(c, yy, xx);
              }
            }
          }
        }
        const double label = s.label->at(py, px);
        double pw = 1.0;
        if (pos > 0 && pos < h * w) pw = label > 0.5 ? n / (2.0 * pos) : n / (2.0 * (h * w - pos));
        const double r = pw * (label - score);
        total += s.weight * s.weight * r * r;
      }
    }
  }
  double ridge = 0.0;
  for (double t : theta) ridge += t * t;
  total += l2_lambda * ridge;
  if (penalty != nullptr) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double d = theta[k] - penalty->anchor[k];
      total += penalty->gamma * penalty->importance[k] * d * d;
    }
  }
  return total;
}

std::vector<double> projected_gradient_lasso(const LassoProblem& problem, int max_iterations, double tolerance) {
  const Dictionary& d = problem.dictionary;
  const std::size_t m = d.cols();
  std::vector<double> psi(m, 0.0);
  if (m == 0) return psi;
  // Lipschitz constant of the smooth part by power iteration on D^T D.
  std::vector<double> v(m, 1.0);
  double lip = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> w = d.correlate(d.apply(v));
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    lip = norm;
    for (std::size_t j = 0; j < m; ++j) v[j] = w[j] / norm;
  }
  if (lip == 0.0) return psi;
  const double step = 1.0 / (lip * 1.01);

  std::vector<double> y = psi, prev = psi;
  double t = 1.0;
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<double> resid = d.apply(y);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= problem.target[i];
    const std::vector<double> g = d.correlate(resid);
    double change = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double next = std::max(0.0, y[j] - step * (g[j] + problem.lambda));
      change = std::max(change, std::abs(next - psi[j]));
      prev[j] = psi[j];
      psi[j] = next;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Restart momentum when the objective goes up.
    const bool restart = lasso_objective(problem, psi) > lasso_objective(problem, prev);
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = restart ? psi[j] : psi[j] + ((t - 1.0) / t_next) * (psi[j] - prev[j]);
    }
    t = restart ? 1.0 : t_next;
    if (change < tolerance) break;
  }
  return psi;
}

double lasso_kkt_residual(const LassoProblem& problem, std::span<const double> psi) {
  std::vector<double> resid = problem.dictionary.apply(psi);
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= problem.target[i];
  const std::vector<double> g = problem.dictionary.correlate(resid);
  double worst = 0.0;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    const double s = g[j] + problem.lambda;
    if (psi[j] < 0.0) worst = std::max(worst, -psi[j]);
    worst = std::max(worst, psi[j] > 0.0 ? std::abs(s) : std::max(0.0, -s));
  }
  return worst;
}

double canonical_unit_ratio() {
  const double unit = static_cast<double>(unit_size_bits(GridShape{512, 30, 52}, 30, 52, 64));
  const double gate = static_cast<double>(gate_unit_size_bits(kCanonicalModelShape));
  return unit / gate;
}

CheckResult check_memory_accounting(double expected, double tolerance) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "memory-accounting";
  r.worst = canonical_unit_ratio();
  r.tolerance = tolerance;
  r.trials = 1;
  r.passed = std::abs(r.worst - expected) <= tolerance;
  r.elapsed_ms = ms_since(start);
  r.detail = fmt("unit/gate size ratio %.4f (expected %.2f)", r.worst, expected);
  return r;
}

CheckResult check_gradients(std::size_t trials, std::uint64_t seed, double tolerance) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "gradients";
  r.tolerance = tolerance;
  r.trials = trials;
  Rng rng(seed, 0x6772);
  double worst_data = 0.0, worst_penalty = 0.0, worst_select = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const RandomInstance inst = random_instance(rng);
    const std::size_t k = inst.theta.size();
    const std::size_t c_in = k / (9 * inst.out_channels);
    TargetModel model(ConvKernel(inst.out_channels, c_in, inst.theta));
    LossConfig cfg;
    cfg.l2_lambda = 0.01 + 0.1 * rng.uniform();

    // Ridge data term with temporal weights.
    {
      const auto batch = batch_of(inst, inst.weights);
      const LossGrad lg = loss_and_grad(model, batch, cfg);
      const auto fd = central_difference(
          [&](std::span<const double> th) { return naive_objective(th, inst.out_channels, batch, cfg.l2_lambda); },
          inst.theta);
      worst_data = std::max(worst_data, worst_relative(lg.grad, fd));
    }
    // Anchor penalty alone (the data term switched off with zero weights).
    {
      std::vector<double> importance(k), anchor(k);
      for (std::size_t i = 0; i < k; ++i) {
        importance[i] = rng.uniform();
        anchor[i] = rng.normal();
      }
      const AnchorPenalty penalty{importance, anchor, 0.1 + 2.0 * rng.uniform()};
      const std::vector<double> zero(inst.weights.size(), 0.0);
      const auto batch = batch_of(inst, zero);
      LossConfig no_ridge = cfg;
      no_ridge.l2_lambda = 0.0;
      const LossGrad lg = loss_and_grad(model, batch, no_ridge, &penalty);
      const auto fd = central_difference(
          [&](std::span<const double> th) { return naive_objective(th, inst.out_channels, batch, 0.0, &penalty); },
          inst.theta);
      worst_penalty = std::max(worst_penalty, worst_relative(lg.grad, fd));
      const std::vector<double> mas = mas_penalty_grad(model, anchor, importance, penalty.gamma);
      worst_penalty = std::max(worst_penalty, worst_relative(mas, fd));
    }
    // Reconstruction-weighted objective: sparse nonnegative psi.
    {
      std::vector<double> psi(inst.weights.size());
      for (double& p : psi) p = rng.uniform() < 0.3 ? 0.0 : 2.0 * rng.uniform();
      const auto batch = batch_of(inst, psi);
      const LossGrad lg = loss_and_grad(model, batch, cfg);
      const auto fd = central_difference(
          [&](std::span<const double> th) { return naive_objective(th, inst.out_channels, batch, cfg.l2_lambda); },
          inst.theta);
      worst_select = std::max(worst_select, worst_relative(lg.grad, fd));
    }
  }
  r.worst = std::max({worst_data, worst_penalty, worst_select});
  r.passed = r.worst <= tolerance;
  r.elapsed_ms = ms_since(start);
  char buf[200];
  std::snprintf(buf, sizeof buf, "worst relative error: data %.2e, penalty %.2e, psi-weighted %.2e", worst_data,
                worst_penalty, worst_select);
  r.detail = buf;
  return r;
}

CheckResult check_lasso(std::size_t problems, std::uint64_t seed, double tolerance) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "lasso";
  r.tolerance = tolerance;
  r.trials = problems;
  Rng rng(seed, 0x6c61);
  double worst_kkt = 0.0, worst_gap = 0.0;
  for (std::size_t p = 0; p < problems; ++p) {
    const std::size_t cols = 1 + rng.below(16);
    const std::size_t rows = 1 + rng.below(32);
    std::vector<double> values(rows * cols);
    for (double& v : values) v = rng.normal() / std::sqrt(static_cast<double>(rows));
    LassoProblem prob{Dictionary(rows, cols, values), std::vector<double>(rows), 0.0};
    for (double& v : prob.target) v = rng.normal();
    prob.lambda = lambda_max(prob.dictionary, prob.target) * std::pow(10.0, -3.0 * rng.uniform());
    const LassoSolution sol = solve_nn_lasso(prob);
    const std::vector<double> oracle = projected_gradient_lasso(prob);
    worst_kkt = std::max(worst_kkt, lasso_kkt_residual(prob, sol.psi));
    worst_gap = std::max(worst_gap, std::abs(lasso_objective(prob, sol.psi) - lasso_objective(prob, oracle)));
  }
  r.worst = std::max(worst_kkt, worst_gap);
  r.passed = worst_kkt <= tolerance && worst_gap <= tolerance;
  r.elapsed_ms = ms_since(start);
  r.detail = fmt("worst KKT residual %.2e, worst objective gap to projected gradient %.2e", worst_kkt, worst_gap);
  return r;
}

std::vector<CheckResult> run_oracle_suite() {
  return {check_memory_accounting(), check_gradients(), check_lasso()};
}

}  // namespace dg
