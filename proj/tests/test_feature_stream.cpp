// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <fstream>

#include "driftgate/errors.hpp"
#include "driftgate/feature_stream.hpp"
#include "driftgate/target_model.hpp"
#include "driftgate/trainer.hpp"
#include "test_util.hpp"

namespace dg {
namespace {

void expect_same_frame(const Frame& a, const Frame& b) {
  EXPECT_EQ(a.feature, b.feature);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.segment, b.segment);
}

DriftStreamParams small_params() {
  DriftStreamParams p;
  p.segments = 3;
  p.frames_per_segment = 12;
  return p;
}

TEST(DriftStream, NoiselessSingleSegmentIsDeterministic) {
  DriftStreamParams p = small_params();
  p.segments = 1;
  p.noise_sigma = 0.0;
  const DriftStreamSpec a = make_drift_stream_spec(p), b = make_drift_stream_spec(p);
  for (std::uint64_t i = 0; i < a.length(); ++i) expect_same_frame(frame_at(a, i), frame_at(b, i));
}

TEST(DriftStream, RegeneratedStreamIsBitIdentical) {
  const DriftStreamParams p = small_params();
  DriftStream s1(make_drift_stream_spec(p)), s2(make_drift_stream_spec(p));
  std::size_t n = 0;
  while (auto f = s1.next_frame()) {
    auto g = s2.next_frame();
    ASSERT_TRUE(g.has_value());
    EXPECT_EQ(f->feature.values().size(), g->feature.values().size());
    EXPECT_TRUE(std::equal(f->feature.values().begin(), f->feature.values().end(), g->feature.values().begin(),
                           [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); }));
    EXPECT_EQ(f->mask, g->mask);
    ++n;
  }
  EXPECT_EQ(n, 36u);
  EXPECT_TRUE(s1.exhausted());
  EXPECT_FALSE(s1.next_frame().has_value());
}

TEST(DriftStream, ReplayEqualsStreaming) {
  const DriftStreamSpec spec = make_drift_stream_spec(small_params());
  DriftStream s(spec);
  for (std::uint64_t i = 0; i < spec.length(); ++i) {
    const auto f = s.next_frame();
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->index, i);
    expect_same_frame(*f, frame_at(spec, i));
  }
}

TEST(DriftStream, SeedsChangeTheStream) {
  DriftStreamParams p = small_params();
  const auto a = make_drift_stream_spec(p);
  p.seed = 2;
  const auto b = make_drift_stream_spec(p);
  EXPECT_FALSE(frame_at(a, 0).feature == frame_at(b, 0).feature);
}

TEST(DriftStream, MasksBalancedInEveryFrame) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    DriftStreamParams p;
    p.seed = seed;
    const auto spec = make_drift_stream_spec(p);
    for (std::uint64_t i = 0; i < spec.length(); ++i) {
      const Frame f = frame_at(spec, i);
      const double frac = static_cast<double>(f.mask.positive_count()) / static_cast<double>(f.mask.size());
      ASSERT_GE(frac, 0.05) << "seed " << seed << " frame " << i;
      ASSERT_LE(frac, 0.95) << "seed " << seed << " frame " << i;
    }
    for (const auto& seg : holdout_eval_set(spec)) {
      for (const Frame& f : seg) {
        const double frac = static_cast<double>(f.mask.positive_count()) / static_cast<double>(f.mask.size());
        EXPECT_GE(frac, 0.05);
        EXPECT_LE(frac, 0.95);
      }
    }
  }
}

TEST(DriftStream, SegmentKernelsPairwiseDistinct) {
  const auto spec = make_drift_stream_spec(DriftStreamParams{});
  ASSERT_EQ(spec.segments.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      EXPECT_FALSE(spec.segments[i].generator_kernel == spec.segments[j].generator_kernel);
}

TEST(DriftStream, OrthogonalSegmentsDefeatTheEarlierFit) {
  // Disjoint channel supports make the segment kernels orthogonal.
  DriftStreamParams p;
  p.segments = 2;
  const auto spec = make_drift_stream_spec(p);
  const TargetModel fit(spec.segments[0].generator_kernel);
  const Frame first = frame_at(spec, spec.frames_per_segment);
  ASSERT_EQ(first.segment, 1u);
  const double chance = static_cast<double>(first.mask.positive_count()) / static_cast<double>(first.mask.size());
  EXPECT_LE(jaccard(fit.forward(first.feature).thresholded(0.5), first.mask), chance);
}

TEST(DriftStream, GradualTransitionBlendsBeforeTheBoundary) {
  DriftStreamParams p = small_params();
  const auto abrupt = make_drift_stream_spec(p);
  p.transition_frames = 4;
  const auto gradual = make_drift_stream_spec(p);
  // Early frames agree; the last frames of segment 0 differ.
  expect_same_frame(frame_at(abrupt, 1), frame_at(gradual, 1));
  EXPECT_FALSE(frame_at(abrupt, 11).feature == frame_at(gradual, 11).feature);
}

TEST(Holdout, Counts) {
  const auto spec = make_drift_stream_spec(small_params());
  const auto one = holdout_eval_set(spec, 1);
  ASSERT_EQ(one.size(), 3u);
  for (const auto& s : one) EXPECT_EQ(s.size(), 1u);
  for (const auto& s : holdout_eval_set(spec)) EXPECT_EQ(s.size(), 21u);
  EXPECT_THROW(holdout_eval_set(spec, 0), ContractViolation);
}

TEST(Holdout, DeterministicAndDistinctFromStream) {
  const auto spec = make_drift_stream_spec(small_params());
  const auto a = holdout_eval_set(spec, 5), b = holdout_eval_set(spec, 5);
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t k = 0; k < a[s].size(); ++k) {
      expect_same_frame(a[s][k], b[s][k]);
      EXPECT_EQ(a[s][k].segment, s);
      for (std::uint64_t i = 0; i < spec.length(); ++i) EXPECT_FALSE(frame_at(spec, i).feature == a[s][k].feature);
    }
}

// Ordinary least squares over every stream frame of one segment.
TargetModel probe_fit(const DriftStreamSpec& spec, std::size_t segment) {
  const GridShape g = spec.dims;
  const std::size_t k = g.channels * 9;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  Eigen::VectorXd row(static_cast<Eigen::Index>(k));
  for (std::size_t l = 0; l < spec.frames_per_segment; ++l) {
    const Frame f = frame_at(spec, segment * spec.frames_per_segment + l);
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        row.setZero();
        for (std::size_t c = 0; c < g.channels; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(x) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(g.height) || sx >= static_cast<long>(g.width)) continue;
              row(static_cast<Eigen::Index>((c * 3 + ky) * 3 + kx)) = f.feature.at(c, sy, sx);
            }
        a.noalias() += row * row.transpose();
        b += f.mask.at(y, x) * row;
      }
  }
  a.diagonal().array() += 1e-6;
  const Eigen::VectorXd theta = a.ldlt().solve(b);
  return TargetModel(ConvKernel(1, g.channels, std::vector<double>(theta.data(), theta.data() + theta.size())));
}

TEST(DriftStream, DefaultSpecSegmentsAreSeparable) {
  const auto spec = make_drift_stream_spec(DriftStreamParams{});
  const auto holdouts = holdout_eval_set(spec);
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const TargetModel probe = probe_fit(spec, i);
    const auto j = evaluate(std::span<const TargetModel>(&probe, 1), holdouts);
    for (std::size_t s = 0; s < spec.segments.size(); ++s) {
      if (s == i) {
        EXPECT_GE(j[0][s], 0.9) << "fit on " << i;
      } else {
        EXPECT_LE(j[0][s], 0.5) << "fit on " << i << " scored on " << s;
      }
    }
  }
}

TEST(Manifest, ExportedStreamReadsBackIdentically) {
  const auto spec = make_drift_stream_spec(small_params());
  const SyntheticSource source(spec, 3);
  const auto dir = test::scratch_dir("manifest");
  const auto path = export_manifest(source, dir);
  const ManifestSource back(path);
  ASSERT_EQ(back.length(), source.length());
  EXPECT_EQ(back.dims(), source.dims());
  EXPECT_EQ(back.segment_count(), 3u);
  for (std::uint64_t i = 0; i < source.length(); ++i) {
    EXPECT_EQ(back.segment_of(i), source.segment_of(i));
    expect_same_frame(back.frame(i), source.frame(i));
  }
  const auto h1 = source.holdouts(), h2 = back.holdouts();
  ASSERT_EQ(h1.size(), h2.size());
  for (std::size_t s = 0; s < h1.size(); ++s) {
    ASSERT_EQ(h1[s].size(), h2[s].size());
    for (std::size_t k = 0; k < h1[s].size(); ++k) expect_same_frame(h1[s][k], h2[s][k]);
  }
}

TEST(Manifest, WithoutHoldoutsUsesStreamFrames) {
  const auto dir = test::scratch_dir("manifest_plain");
  const SyntheticSource source(make_drift_stream_spec(small_params()));
  export_manifest(source, dir);
  std::ifstream in(dir / "manifest.txt");
  std::ofstream out(dir / "plain.txt");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("holdout", 0) != 0) out << line << "\n# comment line\n";
  }
  out.close();
  const ManifestSource m(dir / "plain.txt");
  const auto h = m.holdouts();
  ASSERT_EQ(h.size(), 3u);
  for (const auto& s : h) EXPECT_EQ(s.size(), 12u);
}

TEST(Manifest, MalformedInputsRejected) {
  const auto dir = test::scratch_dir("manifest_bad");
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "m.txt") << text;
    return dir / "m.txt";
  };
  EXPECT_THROW(ManifestSource(dir / "missing.txt"), FormatError);
  EXPECT_THROW(ManifestSource(write("")), FormatError);
  EXPECT_THROW(ManifestSource(write("driftgate-manifest 2\n")), FormatError);
  EXPECT_THROW(ManifestSource(write("driftgate-manifest 1\nframe a.bin\n")), FormatError);
  EXPECT_THROW(ManifestSource(write("driftgate-manifest 1\ndims 1 2 2\nsegments 1\nframe a.bin\n")), FormatError);
  EXPECT_THROW(ManifestSource(write("driftgate-manifest 1\ndims 1 2 2\nbogus\n")), FormatError);
  const ManifestSource lazy(write("driftgate-manifest 1\ndims 1 2 2\nframe nothere.bin\n"));
  EXPECT_THROW(lazy.frame(0), FormatError);
}

}  // namespace
}  // namespace dg
