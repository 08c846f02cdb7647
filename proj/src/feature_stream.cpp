// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/feature_stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "driftgate/errors.hpp"
#include "driftgate/sample_memory.hpp"

namespace dg {

namespace {

constexpr int kMaxFrameAttempts = 64;
constexpr int kMaxSegmentAttempts = 64;
constexpr double kMinPositive = 0.05;
constexpr double kMaxPositive = 0.95;
constexpr std::uint64_t kHoldoutTag = std::uint64_t{1} << 63;
constexpr std::uint64_t kSegmentTag = std::uint64_t{1} << 62;

// 3x3 binomial smoothing, sums to 1.
constexpr double kSmooth[3][3] = {{1.0 / 16, 2.0 / 16, 1.0 / 16},
                                  {2.0 / 16, 4.0 / 16, 2.0 / 16},
                                  {1.0 / 16, 2.0 / 16, 1.0 / 16}};

ConvKernel kernel_for(std::span<const double> appearance, std::span<const double> scale) {
  ConvKernel k(1, appearance.size());
  for (std::size_t c = 0; c < appearance.size(); ++c) {
    const double gain = scale.empty() ? 1.0 : scale[c];
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) k.at(0, c, ky, kx) = appearance[c] / gain * kSmooth[ky][kx];
    }
  }
  return k;
}

struct SegmentState {
  std::vector<double> appearance;
  ConvKernel kernel;
  double threshold;
  Offset offset;
};

// Appearance, kernel and offset at a local frame, including transition blending.
SegmentState state_at(const DriftStreamSpec& spec, std::size_t segment, std::size_t local) {
  const SegmentSpec& cur = spec.segments[segment];
  SegmentState st{cur.appearance, cur.generator_kernel, cur.threshold, cur.translation_path[local]};
  const std::size_t f = spec.frames_per_segment;
  const std::size_t t = spec.transition_frames;
  if (t > 0 && segment + 1 < spec.segments.size() && local + t >= f) {
    const SegmentSpec& nxt = spec.segments[segment + 1];
    const double beta = static_cast<double>(local + t - f + 1) / static_cast<double>(t + 1);
    for (std::size_t c = 0; c < st.appearance.size(); ++c) {
      st.appearance[c] = (1.0 - beta) * cur.appearance[c] + beta * nxt.appearance[c];
    }
    auto kv = st.kernel.values();
    auto nv = nxt.generator_kernel.values();
    if (kv.size() == nv.size()) {
      for (std::size_t i = 0; i < kv.size(); ++i) kv[i] = (1.0 - beta) * kv[i] + beta * nv[i];
    }
    st.threshold = (1.0 - beta) * cur.threshold + beta * nxt.threshold;
  }
  return st;
}

Frame render(const DriftStreamSpec& spec, const SegmentState& st, std::uint64_t index, std::size_t segment,
             Rng& rng) {
  const GridShape dims = spec.dims;
  FeatureGrid x(dims);
  const double cy = (static_cast<double>(dims.height) - 1.0) / 2.0 + st.offset.dy;
  const double cx = (static_cast<double>(dims.width) - 1.0) / 2.0 + st.offset.dx;
  std::vector<double> profile(dims.plane());
  for (std::size_t y = 0; y < dims.height; ++y) {
    for (std::size_t xx = 0; xx < dims.width; ++xx) {
      const double dist = std::hypot(static_cast<double>(y) - cy, static_cast<double>(xx) - cx);
      profile[y * dims.width + xx] = std::clamp(spec.object_radius + 0.5 - dist, 0.0, 1.0);
    }
  }
  for (std::size_t c = 0; c < dims.channels; ++c) {
    const double gain = spec.channel_scale.empty() ? 1.0 : spec.channel_scale[c];
    for (std::size_t p = 0; p < dims.plane(); ++p) {
      x.values()[c * dims.plane() + p] = gain * (st.appearance[c] * profile[p] + spec.noise_sigma * rng.normal());
    }
  }
  MaskGrid mask = conv2d_channel_sum(x, st.kernel).thresholded(st.threshold);
  return Frame{std::move(x), std::move(mask), index, segment};
}

bool balanced(const MaskGrid& m) {
  const double frac = static_cast<double>(m.positive_count()) / static_cast<double>(m.size());
  return frac >= kMinPositive && frac <= kMaxPositive;
}

Frame render_balanced(const DriftStreamSpec& spec, std::size_t segment, std::size_t local, std::uint64_t index,
                      std::uint64_t stream_base) {
  const SegmentState st = state_at(spec, segment, local);
  for (int attempt = 0; attempt < kMaxFrameAttempts; ++attempt) {
    Rng rng(spec.seed, stream_base + static_cast<std::uint64_t>(attempt));
    Frame f = render(spec, st, index, segment, rng);
    if (balanced(f.mask)) return f;
  }
  throw DegenerateInput("frame " + std::to_string(index) + ": no balanced mask after redraws");
}

}  // namespace

MaskGrid generator_scores(const SegmentSpec& segment, const FeatureGrid& feature) {
  return conv2d_channel_sum(feature, segment.generator_kernel);
}

DriftStreamSpec make_drift_stream_spec(const DriftStreamParams& params) {
  require(params.segments >= 1, "make_drift_stream_spec: need at least one segment");
  require(params.frames_per_segment >= 1, "make_drift_stream_spec: frames_per_segment must be positive");
  require(params.support_channels >= 1 && params.support_channels <= params.dims.channels,
          "make_drift_stream_spec: support_channels must lie in [1, C]");
  require(params.transition_frames < params.frames_per_segment,
          "make_drift_stream_spec: transition must be shorter than a segment");

  DriftStreamSpec spec;
  spec.frames_per_segment = params.frames_per_segment;
  spec.dims = params.dims;
  spec.noise_sigma = params.noise_sigma;
  spec.seed = params.seed;
  spec.object_radius = params.object_radius;
  spec.transition_frames = 0;  // blending is enabled once every segment exists

  const std::size_t c = params.dims.channels;
  const double span_y = std::floor(static_cast<double>(params.dims.height) / 2.0 - params.object_radius - 1.0);
  const double span_x = std::floor(static_cast<double>(params.dims.width) / 2.0 - params.object_radius - 1.0);
  const double amp_y = std::max(0.0, span_y);
  const double amp_x = std::max(0.0, span_x);

  if (params.channel_scale_spread > 0.0) {
    Rng gains(params.seed, kSegmentTag | 0xFFFFFE);
    spec.channel_scale.resize(c);
    double log_mean = 0.0;
    for (double& g : spec.channel_scale) {
      g = params.channel_scale_spread * gains.normal();
      log_mean += g / static_cast<double>(c);
    }
    for (double& g : spec.channel_scale) g = std::exp(g - log_mean);
  }

  // Disjoint supports partition one shuffled channel order among segments.
  std::vector<std::size_t> order(c);
  for (std::size_t i = 0; i < c; ++i) order[i] = i;
  if (params.disjoint_support) {
    require(params.segments * params.support_channels <= c,
            "make_drift_stream_spec: disjoint supports need segments * support_channels <= C");
    Rng shuffle(params.seed, kSegmentTag | 0xFFFFFF);
    for (std::size_t i = c; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);
  }

  for (std::size_t s = 0; s < params.segments; ++s) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxSegmentAttempts && !accepted; ++attempt) {
      Rng rng(params.seed, kSegmentTag | (s << 8) | static_cast<std::uint64_t>(attempt));
      SegmentSpec seg;

      std::vector<std::size_t> channels = order;
      if (params.disjoint_support) {
        channels.erase(channels.begin(), channels.begin() + static_cast<std::ptrdiff_t>(s * params.support_channels));
      } else {
        for (std::size_t i = 0; i < params.support_channels; ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.below(c - i));
          std::swap(channels[i], channels[j]);
        }
      }
      seg.appearance.assign(c, 0.0);
      double norm = 0.0;
      for (std::size_t i = 0; i < params.support_channels; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double v = sign * std::exp(params.appearance_spread * rng.normal());
        seg.appearance[channels[i]] = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : seg.appearance) v /= norm;
      seg.generator_kernel = kernel_for(seg.appearance, spec.channel_scale);
      seg.threshold = 0.5;

      const double two_pi = 2.0 * std::numbers::pi;
      const double fy = 0.5 + rng.uniform();
      const double fx = 0.5 + rng.uniform();
      const double py = two_pi * rng.uniform();
      const double px = two_pi * rng.uniform();
      const double n = static_cast<double>(params.frames_per_segment);
      for (std::size_t t = 0; t < params.frames_per_segment; ++t) {
        const double phase = static_cast<double>(t) / n;
        seg.translation_path.push_back({static_cast<int>(std::lround(amp_y * std::sin(two_pi * fy * phase + py))),
                                        static_cast<int>(std::lround(amp_x * std::sin(two_pi * fx * phase + px)))});
      }

      bool distinct = true;
      for (const auto& prev : spec.segments) distinct = distinct && !(prev.generator_kernel == seg.generator_kernel);
      if (!distinct) continue;

      // Both classes must appear in at least 90% of the segment's frames.
      DriftStreamSpec probe = spec;
      probe.segments = {seg};
      std::size_t both = 0;
      for (std::size_t t = 0; t < params.frames_per_segment; ++t) {
        Rng noise(params.seed, kSegmentTag | (s << 8) | 0x80 | static_cast<std::uint64_t>(t) << 16);
        const SegmentState st = state_at(probe, 0, t);
        const Frame f = render(probe, st, t, 0, noise);
        const std::size_t pos = f.mask.positive_count();
        if (pos > 0 && pos < f.mask.size()) ++both;
      }
      if (static_cast<double>(both) >= 0.9 * static_cast<double>(params.frames_per_segment)) {
        spec.segments.push_back(std::move(seg));
        accepted = true;
      }
    }
    if (!accepted) throw DegenerateInput("make_drift_stream_spec: could not draw a usable segment");
  }
  spec.transition_frames = params.transition_frames;
  return spec;
}

Frame frame_at(const DriftStreamSpec& spec, std::uint64_t index) {
  require(index < spec.length(), "frame_at: index past end of stream");
  const std::size_t segment = static_cast<std::size_t>(index / spec.frames_per_segment);
  const std::size_t local = static_cast<std::size_t>(index % spec.frames_per_segment);
  return render_balanced(spec, segment, local, index, index * kMaxFrameAttempts);
}

DriftStream::DriftStream(DriftStreamSpec spec) : spec_(std::move(spec)) {}

std::optional<Frame> DriftStream::next_frame() {
  if (exhausted()) return std::nullopt;
  return frame_at(spec_, next_++);
}

std::vector<std::vector<Frame>> holdout_eval_set(const DriftStreamSpec& spec, std::size_t per_segment) {
  require(per_segment >= 1, "holdout_eval_set: per_segment must be positive");
  std::vector<std::vector<Frame>> out(spec.segments.size());
  const std::size_t f = spec.frames_per_segment;
  for (std::size_t s = 0; s < spec.segments.size(); ++s) {
    for (std::size_t k = 0; k < per_segment; ++k) {
      const std::size_t local = std::min(f - 1, ((2 * k + 1) * f) / (2 * per_segment));
      const std::uint64_t index = s * f + local;
      const std::uint64_t stream = kHoldoutTag | (static_cast<std::uint64_t>(s) << 40) |
                                   (static_cast<std::uint64_t>(k) << 12);
      out[s].push_back(render_balanced(spec, s, local, index, stream));
    }
  }
  return out;
}

SyntheticSource::SyntheticSource(DriftStreamSpec spec, std::size_t holdout_per_segment)
    : spec_(std::move(spec)), holdout_per_segment_(holdout_per_segment) {
  require(!spec_.segments.empty() && spec_.frames_per_segment > 0, "SyntheticSource: empty stream");
}

std::size_t SyntheticSource::segment_of(std::uint64_t index) const {
  return static_cast<std::size_t>(index / spec_.frames_per_segment);
}

namespace {

std::string trim_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

}  // namespace

ManifestSource::ManifestSource(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  bool have_dims = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(trim_comment(line));
    std::string key;
    if (!(ss >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (!header) {
      int version = 0;
      if (key != "driftgate-manifest" || !(ss >> version) || version != 1) fail("expected 'driftgate-manifest 1'");
      header = true;
    } else if (key == "dims") {
      if (!(ss >> dims_.channels >> dims_.height >> dims_.width) || dims_.size() == 0) fail("bad dims");
      have_dims = true;
    } else if (key == "segments") {
      std::uint64_t start = 0;
      while (ss >> start) segment_starts_.push_back(start);
      if (segment_starts_.empty() || segment_starts_.front() != 0) fail("segments must start at 0");
      if (!std::is_sorted(segment_starts_.begin(), segment_starts_.end()) ||
          std::adjacent_find(segment_starts_.begin(), segment_starts_.end()) != segment_starts_.end()) {
        fail("segment starts must be strictly increasing");
      }
    } else if (key == "frame") {
      std::string p;
      if (!(ss >> p)) fail("frame needs a path");
      frames_.push_back(resolve(p));
    } else if (key == "holdout") {
      std::size_t seg = 0;
      std::string p;
      if (!(ss >> seg >> p)) fail("holdout needs a segment and a path");
      holdouts_.emplace_back(seg, resolve(p));
    } else {
      fail("unknown directive '" + key + "'");
    }
  }
  if (!header) throw FormatError(manifest.string() + ": empty manifest");
  if (!have_dims) throw FormatError(manifest.string() + ": missing dims");
  if (frames_.empty()) throw FormatError(manifest.string() + ": no frames");
  if (segment_starts_.empty()) segment_starts_.push_back(0);
  if (segment_starts_.back() >= frames_.size()) throw FormatError(manifest.string() + ": segment start past end");
  for (const auto& [seg, path] : holdouts_) {
    if (seg >= segment_starts_.size()) throw FormatError(manifest.string() + ": holdout segment out of range");
  }
}

std::size_t ManifestSource::segment_of(std::uint64_t index) const {
  const auto it = std::upper_bound(segment_starts_.begin(), segment_starts_.end(), index);
  return static_cast<std::size_t>(std::distance(segment_starts_.begin(), it)) - 1;
}

Frame ManifestSource::load(const std::filesystem::path& path, std::uint64_t index, std::size_t segment) const {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open frame record " + path.string());
  MemorySlot slot = read_slot_record(in, dims_);
  return Frame{std::move(slot.feature), std::move(slot.mask), index, segment};
}

Frame ManifestSource::frame(std::uint64_t index) const {
  require(index < frames_.size(), "ManifestSource::frame: index past end of stream");
  return load(frames_[index], index, segment_of(index));
}

std::vector<std::vector<Frame>> ManifestSource::holdouts() const {
  std::vector<std::vector<Frame>> out(segment_starts_.size());
  if (holdouts_.empty()) {
    for (std::uint64_t i = 0; i < frames_.size(); ++i) out[segment_of(i)].push_back(frame(i));
    return out;
  }
  for (const auto& [seg, path] : holdouts_) out[seg].push_back(load(path, 0, seg));
  return out;
}

std::filesystem::path export_manifest(const FrameSource& source, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  std::filesystem::create_directories(dir / "holdout");
  const auto manifest_path = dir / "manifest.txt";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw FormatError("cannot write " + manifest_path.string());
  const GridShape d = source.dims();
  manifest << "driftgate-manifest 1\n";
  manifest << "dims " << d.channels << ' ' << d.height << ' ' << d.width << '\n';
  manifest << "segments";
  std::size_t last_segment = source.segment_count();
  for (std::uint64_t i = 0; i < source.length(); ++i) {
    const std::size_t s = source.segment_of(i);
    if (s != last_segment) manifest << ' ' << i;
    last_segment = s;
  }
  manifest << '\n';

  auto write_record = [](const std::filesystem::path& path, const Frame& f, bool gt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    write_slot_record(out, MemorySlot{f.feature, f.mask, f.index, 0, gt});
  };
  for (std::uint64_t i = 0; i < source.length(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frames/%06llu.bin", static_cast<unsigned long long>(i));
    write_record(dir / name, source.frame(i), i == 0);
    manifest << "frame " << name << '\n';
  }
  const auto holdouts = source.holdouts();
  for (std::size_t s = 0; s < holdouts.size(); ++s) {
    for (std::size_t k = 0; k < holdouts[s].size(); ++k) {
      char name[48];
      std::snprintf(name, sizeof(name), "holdout/%03zu_%03zu.bin", s, k);
      write_record(dir / name, holdouts[s][k], false);
      manifest << "holdout " << s << ' ' << name << '\n';
    }
  }
  return manifest_path;
}

}  // namespace dg
