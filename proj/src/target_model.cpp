// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/target_model.hpp"

#include <cmath>
#include <fstream>

#include "driftgate/binary_io.hpp"
#include "driftgate/errors.hpp"

namespace dg {

namespace {

constexpr char kModelMagic[5] = "DGTM";
constexpr std::uint32_t kModelVersion = 1;

void check_batch(const TargetModel& model, std::span<const TrainingSample> batch) {
  require(!batch.empty(), "loss_and_grad: empty batch");
  const auto& first = *batch.front().feature;
  for (const auto& s : batch) {
    require(s.feature != nullptr && s.label != nullptr, "loss_and_grad: null sample");
    require(s.feature->channels() == model.shape().in_channels,
            "loss_and_grad: feature channels do not match model C_in");
    require(s.feature->height() == first.height() && s.feature->width() == first.width(),
            "loss_and_grad: inconsistent spatial size in batch");
    require(s.label->height() == s.feature->height() && s.label->width() == s.feature->width(),
            "loss_and_grad: mask size does not match feature size");
  }
}

// Accumulates d/dK[c][ky][kx] of sum_p coeff_p * S_p where S = sum_o conv(X, K_o).
// The result is shared by every output channel.
void accumulate_correlation(const FeatureGrid& x, std::span<const double> coeff, std::span<double> g) {
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto plane = x.channel(c);
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - 1;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0;
        const std::size_t y1 = dy > 0 ? h - 1 : h;
        const std::size_t x0 = dx < 0 ? 1 : 0;
        const std::size_t x1 = dx > 0 ? w - 1 : w;
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y) {
          const std::size_t src = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w;
          for (std::size_t xx = x0; xx < x1; ++xx) {
            acc += coeff[y * w + xx] * plane[src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(xx) + dx)];
          }
        }
        g[(c * 3 + ky) * 3 + kx] += acc;
      }
    }
  }
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TargetModel::TargetModel(ModelShape shape) : weights_(shape.out_channels, shape.in_channels) {}

TargetModel::TargetModel(ConvKernel weights) : weights_(std::move(weights)) {}

MaskGrid TargetModel::forward(const FeatureGrid& x) const {
  require(x.channels() == weights_.in_channels(), "forward: input channels do not match model C_in");
  return conv2d_channel_sum(x, weights_);
}

std::vector<double> pixel_weights(const MaskGrid& label) {
  const std::size_t n = label.size();
  const std::size_t pos = label.positive_count();
  const std::size_t neg = n - pos;
  std::vector<double> w(n, 1.0);
  if (pos == 0 || neg == 0) return w;
  const double half = static_cast<double>(n) / 2.0;
  const double wp = half / static_cast<double>(pos);
  const double wn = half / static_cast<double>(neg);
  auto v = label.values();
  for (std::size_t i = 0; i < n; ++i) w[i] = v[i] > 0.5 ? wp : wn;
  return w;
}

double AnchorPenalty::value(std::span<const double> theta) const {
  double s = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double d = theta[k] - anchor[k];
    s += importance[k] * d * d;
  }
  return gamma * s;
}

void AnchorPenalty::add_gradient(std::span<const double> theta, std::span<double> grad) const {
  for (std::size_t k = 0; k < theta.size(); ++k) {
    grad[k] += 2.0 * gamma * importance[k] * (theta[k] - anchor[k]);
  }
}

double AnchorPenalty::curvature(std::span<const double> direction) const {
  double s = 0.0;
  for (std::size_t k = 0; k < direction.size(); ++k) s += importance[k] * direction[k] * direction[k];
  return 2.0 * gamma * s;
}

LossGrad loss_and_grad(const TargetModel& model, std::span<const TrainingSample> batch,
                       const LossConfig& cfg, const AnchorPenalty* penalty) {
  check_batch(model, batch);
  const std::size_t k = model.param_count();
  const ModelShape shape = model.shape();
  const std::size_t per_out = shape.in_channels * ConvKernel::kTaps;
  if (penalty != nullptr) {
    require(penalty->importance.size() == k && penalty->anchor.size() == k,
            "loss_and_grad: penalty size does not match parameter count");
  }

  LossGrad out;
  std::vector<double> shared(per_out, 0.0);
  std::vector<double> coeff;
  for (const auto& s : batch) {
    const MaskGrid score = model.forward(*s.feature);
    const std::vector<double> pw = pixel_weights(*s.label);
    const double w2 = s.weight * s.weight;
    auto y = s.label->values();
    auto pred = score.values();
    coeff.assign(pred.size(), 0.0);
    double sample_loss = 0.0;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const double r = y[p] - pred[p];
      const double pw2 = pw[p] * pw[p];
      sample_loss += pw2 * r * r;
      coeff[p] = -2.0 * w2 * pw2 * r;
    }
    out.data_loss += w2 * sample_loss;
    accumulate_correlation(*s.feature, coeff, shared);
  }

  out.data_grad.resize(k);
  for (std::size_t o = 0; o < shape.out_channels; ++o) {
    std::copy(shared.begin(), shared.end(), out.data_grad.begin() + static_cast<std::ptrdiff_t>(o * per_out));
  }

  auto theta = model.weights();
  out.grad = out.data_grad;
  double ridge = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    ridge += theta[i] * theta[i];
    out.grad[i] += 2.0 * cfg.l2_lambda * theta[i];
  }
  out.loss = out.data_loss + cfg.l2_lambda * ridge;
  if (penalty != nullptr) {
    out.loss += penalty->value(theta);
    penalty->add_gradient(theta, out.grad);
  }
  return out;
}

namespace {

// d^T H d of the full objective along direction d.
double directional_curvature(std::span<const TrainingSample> batch, const ModelShape& shape,
                             std::span<const double> direction, const LossConfig& cfg,
                             const AnchorPenalty* penalty) {
  const TargetModel probe(ConvKernel(shape.out_channels, shape.in_channels,
                                     std::vector<double>(direction.begin(), direction.end())));
  double data = 0.0;
  for (const auto& s : batch) {
    const MaskGrid response = probe.forward(*s.feature);
    const std::vector<double> pw = pixel_weights(*s.label);
    auto r = response.values();
    double acc = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) acc += pw[p] * pw[p] * r[p] * r[p];
    data += s.weight * s.weight * acc;
  }
  double curvature = 2.0 * data + 2.0 * cfg.l2_lambda * squared_norm(direction);
  if (penalty != nullptr) curvature += penalty->curvature(direction);
  return curvature;
}

}  // namespace

UpdateResult train_update(TargetModel& model, std::span<const TrainingSample> batch,
                          const LossConfig& cfg, const GateMap* freeze_mask,
                          const AnchorPenalty* penalty, int epochs) {
  const std::size_t k = model.param_count();
  if (freeze_mask != nullptr) {
    require(freeze_mask->size() == k, "train_update: freeze mask size does not match parameter count");
  }
  const int n_epochs = epochs < 0 ? cfg.epochs_per_update : epochs;
  require(n_epochs >= 0, "train_update: epoch count must be nonnegative");

  UpdateResult result;
  result.epochs = n_epochs;
  result.frozen_count = freeze_mask != nullptr ? freeze_mask->popcount() : 0;
  auto frozen = [&](std::size_t i) { return freeze_mask != nullptr && freeze_mask->test(i); };

  std::vector<double> direction(k);
  for (int epoch = 0; epoch < n_epochs; ++epoch) {
    LossGrad lg = loss_and_grad(model, batch, cfg, penalty);
    result.losses.push_back(lg.loss);
    for (std::size_t i = 0; i < k; ++i) {
      if (frozen(i)) {
        direction[i] = 0.0;
        lg.data_grad[i] = 0.0;
      } else {
        direction[i] = -lg.grad[i];
      }
    }
    result.data_grad_trace.push_back(std::move(lg.data_grad));

    double step = cfg.learning_rate;
    if (cfg.step_rule == StepRule::ExactLineSearch) {
      const double slope = squared_norm(direction);
      const double curvature = directional_curvature(batch, model.shape(), direction, cfg, penalty);
      step = (slope > 0.0 && curvature > 0.0) ? slope / curvature : 0.0;
    }
    auto theta = model.weights();
    for (std::size_t i = 0; i < k; ++i) {
      if (!frozen(i)) theta[i] += step * direction[i];
    }
  }
  result.losses.push_back(loss_and_grad(model, batch, cfg, penalty).loss);
  return result;
}

void write_model(const std::filesystem::path& path, const TargetModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  io::put_magic(out, kModelMagic);
  io::put_le<std::uint32_t>(out, kModelVersion);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.shape().out_channels));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.shape().in_channels));
  for (double w : model.weights()) io::put_f64(out, w);
  if (!out) throw FormatError("write failed for " + path.string());
}

TargetModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, kModelMagic);
  const auto version = io::get_le<std::uint32_t>(in);
  if (version != kModelVersion) throw FormatError("unsupported model version " + std::to_string(version));
  const auto out_ch = io::get_le<std::uint32_t>(in);
  const auto in_ch = io::get_le<std::uint32_t>(in);
  if (out_ch == 0 || in_ch == 0) throw FormatError("model file has zero channels");
  std::vector<double> values(static_cast<std::size_t>(out_ch) * in_ch * ConvKernel::kTaps);
  for (double& v : values) v = io::get_f64(in);
  return TargetModel(ConvKernel(out_ch, in_ch, std::move(values)));
}

}  // namespace dg
