// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-layer convolutional target model trained online on weighted memory
// samples. The label encoder is the identity, so the model regresses the
// stored masks directly.

#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "driftgate/gate_map.hpp"
#include "driftgate/numerics.hpp"

namespace dg {

struct ModelShape {
  std::size_t out_channels = 1;
  std::size_t in_channels = 1;

  std::size_t param_count() const { return out_channels * in_channels * ConvKernel::kTaps; }
  bool operator==(const ModelShape&) const = default;
};

/// Full-scale target model: 512 feature channels to 16 score channels,
/// K = 73728 weights, no bias.
inline constexpr ModelShape kCanonicalModelShape{16, 512};

class TargetModel {
 public:
  TargetModel() = default;
  explicit TargetModel(ModelShape shape);
  explicit TargetModel(ConvKernel weights);

  ModelShape shape() const { return {weights_.out_channels(), weights_.in_channels()}; }
  std::size_t param_count() const { return weights_.size(); }

  const ConvKernel& kernel() const { return weights_; }
  std::span<const double> weights() const { return weights_.values(); }
  std::span<double> weights() { return weights_.values(); }

  /// Score map: conv2d output channels summed into one H x W map.
  MaskGrid forward(const FeatureGrid& x) const;

  bool operator==(const TargetModel&) const = default;

 private:
  ConvKernel weights_;
};

enum class StepRule {
  /// theta -= learning_rate * grad
  FixedRate,
  /// Steepest descent with the exact minimiser along -grad. The objective is
  /// quadratic in the weights, so the step is closed form.
  ExactLineSearch,
};

struct LossConfig {
  double l2_lambda = 1e-4;
  int epochs_per_update = 3;
  /// Epochs for the first fit on the annotated frame.
  int initial_epochs = 10;
  double learning_rate = 1e-3;
  /// Per-update-step decay of the temporal sample weight d_n.
  double temporal_decay_base = 0.9;
  StepRule step_rule = StepRule::ExactLineSearch;
  /// Strength of the gate penalty. Infinity means gated weights are frozen
  /// outright; a finite value turns the gate into a quadratic anchor.
  double gate_gamma = std::numeric_limits<double>::infinity();
};

/// One training sample. Pointers are non-owning and must outlive the call.
struct TrainingSample {
  const FeatureGrid* feature = nullptr;
  const MaskGrid* label = nullptr;
  /// Temporal weight d_n or reconstruction weight psi_n.
  double weight = 1.0;
};

/// Class-balancing pixel weights: each present class receives total weight
/// H*W/2; a single-class mask gets uniform weight 1.
std::vector<double> pixel_weights(const MaskGrid& label);

/// Quadratic pull towards an anchor: gamma * sum_k importance_k (theta_k - anchor_k)^2.
struct AnchorPenalty {
  std::span<const double> importance;
  std::span<const double> anchor;
  double gamma = 0.0;

  double value(std::span<const double> theta) const;
  /// Adds 2 * gamma * importance_k * (theta_k - anchor_k) into `grad`.
  void add_gradient(std::span<const double> theta, std::span<double> grad) const;
  /// d^T H d of the penalty along direction d.
  double curvature(std::span<const double> direction) const;
};

struct LossGrad {
  /// data + ridge (+ penalty when one is supplied)
  double loss = 0.0;
  double data_loss = 0.0;
  std::vector<double> grad;
  /// Gradient of the data term alone; importance is measured on this.
  std::vector<double> data_grad;
};

/// loss = sum_n || w_n * W_n * (Y_n - C(X_n)) ||^2 + lambda * sum_k theta_k^2
///        [+ penalty], with its exact analytic gradient.
LossGrad loss_and_grad(const TargetModel& model, std::span<const TrainingSample> batch,
                       const LossConfig& cfg, const AnchorPenalty* penalty = nullptr);

struct UpdateResult {
  /// Objective before each epoch, followed by the objective after the last one.
  std::vector<double> losses;
  std::size_t frozen_count = 0;
  int epochs = 0;
  /// Applied (freeze-masked) data-term gradient of every epoch.
  std::vector<std::vector<double>> data_grad_trace;

  double initial_loss() const { return losses.front(); }
  double final_loss() const { return losses.back(); }
};

/// Full-batch descent for `epochs` epochs (cfg.epochs_per_update when
/// negative). Weights whose freeze bit is set are left bitwise untouched.
UpdateResult train_update(TargetModel& model, std::span<const TrainingSample> batch,
                          const LossConfig& cfg, const GateMap* freeze_mask = nullptr,
                          const AnchorPenalty* penalty = nullptr, int epochs = -1);

/// "DGTM" file: magic, version u32, C_out u32, C_in u32, then K little-endian
/// f64 weights in canonical layout.
void write_model(const std::filesystem::path& path, const TargetModel& model);
TargetModel read_model(const std::filesystem::path& path);

}  // namespace dg
