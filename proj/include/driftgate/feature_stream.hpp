// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frame sources for the online loop: a synthetic stream whose object
// appearance and labelling kernel switch at segment boundaries, and a
// manifest-backed reader for externally produced feature/mask records.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "driftgate/numerics.hpp"

namespace dg {

struct Frame {
  FeatureGrid feature;
  /// Ground-truth labels.
  MaskGrid mask;
  std::uint64_t index = 0;
  std::size_t segment = 0;
};

struct Offset {
  int dy = 0;
  int dx = 0;
  bool operator==(const Offset&) const = default;
};

struct SegmentSpec {
  /// Hidden labelling kernel, C_gen x C x 3 x 3.
  ConvKernel generator_kernel;
  /// Per-channel object appearance.
  std::vector<double> appearance;
  /// Object centre offset from the grid centre, one entry per frame.
  std::vector<Offset> translation_path;
  /// Mask = 1[sum_o (generator * X) > threshold].
  double threshold = 0.5;
};

struct DriftStreamSpec {
  std::vector<SegmentSpec> segments;
  std::size_t frames_per_segment = 0;
  GridShape dims;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double object_radius = 3.5;
  /// When nonzero, the last `transition_frames` frames of each segment blend
  /// linearly into the next segment instead of switching at the boundary.
  std::size_t transition_frames = 0;
  /// Per-channel gain applied to signal and noise alike; empty means 1. The
  /// generator kernels divide it back out, so labels do not depend on it.
  std::vector<double> channel_scale;

  std::size_t length() const { return segments.size() * frames_per_segment; }
};

/// Knobs for the generated benchmark stream.
struct DriftStreamParams {
  std::size_t segments = 4;
  std::size_t frames_per_segment = 60;
  GridShape dims{16, 16, 16};
  double noise_sigma = 0.4;
  std::uint64_t seed = 1;
  /// Channels carrying each segment's appearance.
  std::size_t support_channels = 4;
  /// Log-normal spread of per-channel appearance magnitudes; 0 gives equal
  /// magnitudes.
  double appearance_spread = 0.0;
  /// Give every segment its own channels instead of a random subset.
  bool disjoint_support = true;
  /// Log-normal spread of the per-channel gains.
  double channel_scale_spread = 0.0;
  double object_radius = 3.5;
  std::size_t transition_frames = 0;
};

/// Draws appearances, kernels and paths. A segment whose masks have both
/// classes in fewer than 90% of frames is redrawn.
DriftStreamSpec make_drift_stream_spec(const DriftStreamParams& params);

/// Renders one frame. Noise comes from a generator keyed on (seed, index,
/// attempt); frames with a positive fraction outside [0.05, 0.95] are redrawn
/// with the next attempt, so frame_at is a pure function of (spec, index).
Frame frame_at(const DriftStreamSpec& spec, std::uint64_t index);

/// Hidden labelling scores of a feature under a segment's kernel.
MaskGrid generator_scores(const SegmentSpec& segment, const FeatureGrid& feature);

/// Sequential cursor over a spec.
class DriftStream {
 public:
  explicit DriftStream(DriftStreamSpec spec);
  /// Next frame, or nullopt once the stream is exhausted.
  std::optional<Frame> next_frame();
  bool exhausted() const { return next_ >= spec_.length(); }
  const DriftStreamSpec& spec() const { return spec_; }

 private:
  DriftStreamSpec spec_;
  std::uint64_t next_ = 0;
};

inline constexpr std::size_t kDefaultHoldoutPerSegment = 21;

/// Held-out labelled frames per segment, spread along each segment's path
/// with noise draws independent of the stream's.
std::vector<std::vector<Frame>> holdout_eval_set(const DriftStreamSpec& spec,
                                                 std::size_t per_segment = kDefaultHoldoutPerSegment);

/// Random-access frame provider consumed by the trainer.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t length() const = 0;
  virtual GridShape dims() const = 0;
  virtual std::size_t segment_count() const = 0;
  virtual std::size_t segment_of(std::uint64_t index) const = 0;
  virtual Frame frame(std::uint64_t index) const = 0;
  virtual std::vector<std::vector<Frame>> holdouts() const = 0;
};

class SyntheticSource final : public FrameSource {
 public:
  explicit SyntheticSource(DriftStreamSpec spec, std::size_t holdout_per_segment = kDefaultHoldoutPerSegment);

  std::size_t length() const override { return spec_.length(); }
  GridShape dims() const override { return spec_.dims; }
  std::size_t segment_count() const override { return spec_.segments.size(); }
  std::size_t segment_of(std::uint64_t index) const override;
  Frame frame(std::uint64_t index) const override { return frame_at(spec_, index); }
  std::vector<std::vector<Frame>> holdouts() const override { return holdout_eval_set(spec_, holdout_per_segment_); }
  const DriftStreamSpec& spec() const { return spec_; }

 private:
  DriftStreamSpec spec_;
  std::size_t holdout_per_segment_;
};

/// Manifest text format, one directive per line, '#' starts a comment:
///
///   driftgate-manifest 1
///   dims <C> <H> <W>
///   segments <start_0> <start_1> ...      (first start is 0)
///   frame <path>                          (one per frame, in order)
///   holdout <segment> <path>              (optional)
///
/// Every path names a file holding one slot record (the sample-memory dump
/// layout); relative paths resolve against the manifest's directory. Without
/// holdout lines, each segment's own stream frames serve as its evaluation set.
class ManifestSource final : public FrameSource {
 public:
  explicit ManifestSource(const std::filesystem::path& manifest);

  std::size_t length() const override { return frames_.size(); }
  GridShape dims() const override { return dims_; }
  std::size_t segment_count() const override { return segment_starts_.size(); }
  std::size_t segment_of(std::uint64_t index) const override;
  Frame frame(std::uint64_t index) const override;
  std::vector<std::vector<Frame>> holdouts() const override;

 private:
  Frame load(const std::filesystem::path& path, std::uint64_t index, std::size_t segment) const;

  GridShape dims_;
  std::vector<std::uint64_t> segment_starts_;
  std::vector<std::filesystem::path> frames_;
  std::vector<std::pair<std::size_t, std::filesystem::path>> holdouts_;
};

/// Writes `source` as a manifest plus per-frame record files under `dir`.
std::filesystem::path export_manifest(const FrameSource& source, const std::filesystem::path& dir);

}  // namespace dg
