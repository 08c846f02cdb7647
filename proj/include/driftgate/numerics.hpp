// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense grids, 3x3 zero-padded convolution, channel pooling and a portable
// counter-based random generator. Storage is row-major (channel, row, column)
// everywhere.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dg {

struct GridShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return channels * height * width; }
  bool operator==(const GridShape&) const = default;
};

/// C x H x W real-valued feature map.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  explicit FeatureGrid(GridShape shape);
  FeatureGrid(GridShape shape, std::vector<double> values);

  const GridShape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(values_).subspan(c * shape_.plane(), shape_.plane());
  }

  bool all_finite() const;
  bool operator==(const FeatureGrid&) const = default;

 private:
  GridShape shape_;
  std::vector<double> values_;
};

enum class MaskKind : std::uint8_t { BinaryLabel, ScoreMap };

/// H x W mask: binary labels in {0, 1} or real-valued scores.
class MaskGrid {
 public:
  MaskGrid() = default;
  MaskGrid(std::size_t height, std::size_t width, MaskKind kind);
  MaskGrid(std::size_t height, std::size_t width, MaskKind kind, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  MaskKind kind() const { return kind_; }

  double& at(std::size_t y, std::size_t x) { return values_[y * width_ + x]; }
  double at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::size_t positive_count() const;
  /// Binary mask with 1 where the score is strictly above `threshold`.
  MaskGrid thresholded(double threshold) const;
  bool operator==(const MaskGrid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  MaskKind kind_ = MaskKind::BinaryLabel;
  std::vector<double> values_;
};

/// Weight tensor of shape C_out x C_in x 3 x 3.
class ConvKernel {
 public:
  static constexpr std::size_t kTaps = 9;

  ConvKernel() = default;
  ConvKernel(std::size_t out_channels, std::size_t in_channels);
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::vector<double> values);

  std::size_t out_channels() const { return out_; }
  std::size_t in_channels() const { return in_; }
  std::size_t size() const { return values_.size(); }

  /// ky, kx in [0, 3); tap (1, 1) is the centre.
  static std::size_t index(std::size_t in_channels, std::size_t o, std::size_t c, std::size_t ky,
                           std::size_t kx) {
    return ((o * in_channels + c) * 3 + ky) * 3 + kx;
  }
  double& at(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
    return values_[index(in_, o, c, ky, kx)];
  }
  double at(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) const {
    return values_[index(in_, o, c, ky, kx)];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  bool operator==(const ConvKernel&) const = default;

 private:
  std::size_t out_ = 0;
  std::size_t in_ = 0;
  std::vector<double> values_;
};

/// Cross-correlation with a 3x3 kernel, stride 1, zero padding 1.
FeatureGrid conv2d(const FeatureGrid& input, const ConvKernel& kernel);

/// Sum of conv2d output channels, accumulated in channel order.
MaskGrid conv2d_channel_sum(const FeatureGrid& input, const ConvKernel& kernel);

/// Per-pixel maximum over channels, C x H x W -> 1 x H x W.
FeatureGrid channel_max_pool(const FeatureGrid& input);

/// Nearest-rank percentile: sorted[ceil(p / 100 * n) - 1], index clamped.
double percentile(std::span<const double> values, double p);

/// Counter-based generator (SplitMix64 finalizer over seed and counter).
/// Equal seeds give equal sequences on every platform; distributions are
/// computed here rather than through <random> for the same reason.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dg
