// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "driftgate/errors.hpp"

namespace dg {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractViolation(std::string(what) + ": non-finite value");
  }
}

}  // namespace

FeatureGrid::FeatureGrid(GridShape shape) : shape_(shape), values_(shape.size(), 0.0) {
  require(shape.channels > 0 && shape.height > 0 && shape.width > 0,
          "FeatureGrid: dimensions must be positive");
}

FeatureGrid::FeatureGrid(GridShape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  require(shape.channels > 0 && shape.height > 0 && shape.width > 0,
          "FeatureGrid: dimensions must be positive");
  require(values_.size() == shape.size(), "FeatureGrid: value count does not match C*H*W");
  require_finite(values_, "FeatureGrid");
}

bool FeatureGrid::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

MaskGrid::MaskGrid(std::size_t height, std::size_t width, MaskKind kind)
    : height_(height), width_(width), kind_(kind), values_(height * width, 0.0) {
  require(height > 0 && width > 0, "MaskGrid: dimensions must be positive");
}

MaskGrid::MaskGrid(std::size_t height, std::size_t width, MaskKind kind, std::vector<double> values)
    : height_(height), width_(width), kind_(kind), values_(std::move(values)) {
  require(height > 0 && width > 0, "MaskGrid: dimensions must be positive");
  require(values_.size() == height * width, "MaskGrid: value count does not match H*W");
  require_finite(values_, "MaskGrid");
  if (kind == MaskKind::BinaryLabel) {
    for (double v : values_) require(v == 0.0 || v == 1.0, "MaskGrid: binary label outside {0, 1}");
  }
}

std::size_t MaskGrid::positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](double v) { return v > 0.5; }));
}

MaskGrid MaskGrid::thresholded(double threshold) const {
  MaskGrid out(height_, width_, MaskKind::BinaryLabel);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] > threshold ? 1.0 : 0.0;
  return out;
}

ConvKernel::ConvKernel(std::size_t out_channels, std::size_t in_channels)
    : out_(out_channels), in_(in_channels), values_(out_channels * in_channels * kTaps, 0.0) {
  require(out_channels > 0 && in_channels > 0, "ConvKernel: channel counts must be positive");
}

ConvKernel::ConvKernel(std::size_t out_channels, std::size_t in_channels, std::vector<double> values)
    : out_(out_channels), in_(in_channels), values_(std::move(values)) {
  require(out_channels > 0 && in_channels > 0, "ConvKernel: channel counts must be positive");
  require(values_.size() == out_channels * in_channels * kTaps,
          "ConvKernel: value count does not match C_out*C_in*9");
  require_finite(values_, "ConvKernel");
}

FeatureGrid conv2d(const FeatureGrid& input, const ConvKernel& kernel) {
  require(kernel.in_channels() == input.channels(), "conv2d: kernel C_in does not match input channels");
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  FeatureGrid out(GridShape{kernel.out_channels(), h, w});
  auto in = input.values();
  auto dst = out.values();
  const std::size_t plane = h * w;

  // Accumulate one shifted input plane per (c, tap); the valid output window
  // for offset (dy, dx) is the rectangle where (y + dy, x + dx) stays inside.
  for (std::size_t o = 0; o < kernel.out_channels(); ++o) {
    double* out_plane = dst.data() + o * plane;
    for (std::size_t c = 0; c < kernel.in_channels(); ++c) {
      const double* in_plane = in.data() + c * plane;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wgt = kernel.at(o, c, ky, kx);
          if (wgt == 0.0) continue;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - 1;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? h - 1 : h;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* src_row = in_plane + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w;
            double* dst_row = out_plane + y * w;
            for (std::size_t x = x0; x < x1; ++x) {
              dst_row[x] += wgt * src_row[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)];
            }
          }
        }
      }
    }
  }
  return out;
}

MaskGrid conv2d_channel_sum(const FeatureGrid& input, const ConvKernel& kernel) {
  const FeatureGrid full = conv2d(input, kernel);
  MaskGrid out(input.height(), input.width(), MaskKind::ScoreMap);
  auto dst = out.values();
  for (std::size_t o = 0; o < full.channels(); ++o) {
    auto src = full.channel(o);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

FeatureGrid channel_max_pool(const FeatureGrid& input) {
  FeatureGrid out(GridShape{1, input.height(), input.width()});
  auto dst = out.values();
  auto first = input.channel(0);
  std::copy(first.begin(), first.end(), dst.begin());
  for (std::size_t c = 1; c < input.channels(); ++c) {
    auto src = input.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  return out;
}

double percentile(std::span<const double> values, double p) {
  require(!values.empty(), "percentile: empty input");
  require(p > 0.0 && p < 100.0, "percentile: p must lie in (0, 100)");
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t n = sorted.size();
  const double rank = std::ceil(p / 100.0 * static_cast<double>(n));
  std::size_t idx = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  idx = std::min(idx, n - 1);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
  return sorted[idx];
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(splitmix64(seed ^ splitmix64(stream))) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64(seed_ + counter_ * 0xD1B54A32D192ED03ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  require(bound > 0, "Rng::below: bound must be positive");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % bound;
}

}  // namespace dg
