// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <bitset>
#include <set>

#include "driftgate/errors.hpp"
#include "driftgate/trainer.hpp"
#include "test_util.hpp"

namespace dg {
namespace {

DriftStreamSpec tiny_spec(std::size_t segments = 2, std::size_t frames = 10) {
  DriftStreamParams p;
  p.segments = segments;
  p.frames_per_segment = frames;
  p.dims = {8, 8, 8};
  p.support_channels = 2;
  return make_drift_stream_spec(p);
}

MethodConfig config(Method m, std::size_t delta) {
  MethodConfig c;
  c.method = m;
  c.delta_c = c.delta_m = delta;
  c.memory_capacity = 8;
  return c;
}

TEST(RunStream, UpdateCadence) {
  const SyntheticSource src(tiny_spec(2, 11), 2);
  for (std::size_t delta : {1u, 3u, 4u}) {
    const RunResult r = run_stream(src, config(Method::Baseline, delta));
    std::vector<std::uint64_t> expect{0};
    for (std::uint64_t f = 1; f < src.length(); ++f)
      if (f % delta == 0) expect.push_back(f);
    std::vector<std::uint64_t> got;
    for (const auto& rep : r.reports) got.push_back(rep.frame_index);
    EXPECT_EQ(got, expect) << "delta " << delta;
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
      EXPECT_EQ(r.reports[i].update_step, i);
      EXPECT_EQ(r.reports[i].losses.size(), i == 0 ? 11u : 4u);
    }
  }
}

TEST(RunStream, MemoryHoldsOnlyInsertedFrames) {
  const SyntheticSource src(tiny_spec(2, 12), 2);
  const RunResult r = run_stream(src, config(Method::Baseline, 3));
  for (const auto& rep : r.reports) {
    for (std::uint64_t f : rep.batch_frames) {
      EXPECT_TRUE(f == 0 || f % 3 == 0);
      EXPECT_LT(f, rep.frame_index == 0 ? 1u : rep.frame_index);
    }
    EXPECT_EQ(rep.batch_frames.size(), rep.memory_size);
  }
}

TEST(RunStream, LongIntervalKeepsTheFirstFit) {
  const SyntheticSource src(tiny_spec(2, 6), 2);
  const RunResult r = run_stream(src, config(Method::Baseline, 1000));
  ASSERT_EQ(r.reports.size(), 1u);
  for (const auto& snap : r.snapshots) EXPECT_EQ(snap, r.final_model);
  EXPECT_EQ(r.peak_memory_slots, 1u);
}

TEST(RunStream, PredictionsAndSnapshots) {
  const SyntheticSource src(tiny_spec(3, 7), 2);
  const RunResult r = run_stream(src, config(Method::Grcl, 2));
  EXPECT_EQ(r.predictions.size(), src.length());
  ASSERT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.snapshot_frames, (std::vector<std::uint64_t>{7, 14, 21}));
  RunOptions quiet;
  quiet.keep_predictions = false;
  EXPECT_TRUE(run_stream(src, config(Method::Grcl, 2), quiet).predictions.empty());
}

TEST(RunStream, BaselineEqualsMasWithoutPenalty) {
  const SyntheticSource src(tiny_spec(2, 8), 2);
  MethodConfig mas = config(Method::Mas, 2);
  mas.mas_gamma = 0.0;
  const RunResult a = run_stream(src, config(Method::Baseline, 2));
  const RunResult b = run_stream(src, mas);
  EXPECT_EQ(a.final_model, b.final_model);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) EXPECT_EQ(a.reports[i].losses, b.reports[i].losses);
}

TEST(RunStream, FrozenWeightsNeverMove) {
  const SyntheticSource src(tiny_spec(2, 15), 2);
  for (Method m : {Method::Grcl, Method::Hybrid}) {
    std::size_t updates = 0, frozen_seen = 0;
    RunOptions opt;
    opt.observer = [&](const UpdateEvent& e) {
      ++updates;
      ASSERT_NE(e.freeze, nullptr);
      for (std::size_t k = 0; k < e.before.size(); ++k) {
        if (!e.freeze->test(k)) continue;
        ++frozen_seen;
        ASSERT_EQ(std::bit_cast<std::uint64_t>(e.before[k]), std::bit_cast<std::uint64_t>(e.after[k]));
      }
      EXPECT_EQ(e.freeze->popcount(), e.report.frozen_count);
    };
    run_stream(src, config(m, 1), opt);
    EXPECT_EQ(updates, src.length());
    EXPECT_GT(frozen_seen, 0u) << to_string(m);
  }
}

TEST(RunStream, HybridGateFollowsTheSameRule) {
  // The hybrid gate is built by the same maintenance rule as GRCL: the
  // reported popcount after each update is the OR of the retained maps,
  // which the next update freezes.
  const SyntheticSource src(tiny_spec(2, 10), 2);
  for (Method m : {Method::Grcl, Method::Hybrid}) {
    std::vector<std::size_t> after, next_frozen;
    RunOptions opt;
    opt.observer = [&](const UpdateEvent& e) {
      after.push_back(e.report.gate_popcount);
      next_frozen.push_back(e.report.frozen_count);
    };
    run_stream(src, config(m, 1), opt);
    EXPECT_EQ(next_frozen.front(), 0u);
    for (std::size_t i = 1; i < after.size(); ++i) EXPECT_EQ(next_frozen[i], after[i - 1]) << to_string(m);
  }
}

TEST(RunStream, WorkingMemoryIsSubsetOfMemory) {
  const SyntheticSource src(tiny_spec(2, 12), 2);
  for (Method m : {Method::Rmscl, Method::Hybrid}) {
    const RunResult r = run_stream(src, config(m, 2));
    for (const auto& rep : r.reports) {
      EXPECT_LE(rep.working_memory_size, rep.memory_size);
      EXPECT_EQ(rep.psi.size(), rep.batch_frames.size());
      std::set<std::uint64_t> uniq(rep.batch_frames.begin(), rep.batch_frames.end());
      EXPECT_EQ(uniq.size(), rep.batch_frames.size());
      for (std::uint64_t f : rep.batch_frames) EXPECT_TRUE(f == 0 || (f % 2 == 0 && f < rep.frame_index));
      for (double p : rep.psi) EXPECT_GT(p, 0.0);
    }
  }
}

TEST(RunStream, Deterministic) {
  const SyntheticSource src(tiny_spec(2, 8), 2);
  for (Method m : {Method::Baseline, Method::Mas, Method::Grcl, Method::Rmscl, Method::Hybrid}) {
    EXPECT_EQ(run_stream(src, config(m, 2)).final_model, run_stream(src, config(m, 2)).final_model) << to_string(m);
  }
}

TEST(RunStream, ContractChecks) {
  const SyntheticSource src(tiny_spec(1, 3), 1);
  EXPECT_THROW(run_stream(src, config(Method::Baseline, 0)), ContractViolation);
  EXPECT_THROW(parse_method("nope"), ContractViolation);
  EXPECT_EQ(parse_method("hybrid"), Method::Hybrid);
  EXPECT_EQ(parse_label_source("prediction"), LabelSource::Prediction);
}

TEST(Jaccard, Examples) {
  Rng rng(1);
  const MaskGrid m = test::random_mask(rng, 6, 6, 0.4);
  EXPECT_EQ(jaccard(m, m), 1.0);
  MaskGrid comp(6, 6, MaskKind::BinaryLabel);
  for (std::size_t i = 0; i < 36; ++i) comp.values()[i] = 1.0 - m.values()[i];
  EXPECT_EQ(jaccard(comp, m), 0.0);
  EXPECT_EQ(jaccard(MaskGrid(2, 2, MaskKind::BinaryLabel), MaskGrid(2, 2, MaskKind::BinaryLabel)), 1.0);
  EXPECT_THROW(jaccard(MaskGrid(2, 2, MaskKind::BinaryLabel), MaskGrid(2, 3, MaskKind::BinaryLabel)), ContractViolation);
}

TEST(Jaccard, BitsetOracle) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const MaskGrid a = test::random_mask(rng, 8, 8, rng.uniform()), b = test::random_mask(rng, 8, 8, rng.uniform());
    std::bitset<64> x, y;
    for (std::size_t i = 0; i < 64; ++i) {
      x[i] = a.values()[i] > 0.5;
      y[i] = b.values()[i] > 0.5;
    }
    const double expect = (x | y).none() ? 1.0 : static_cast<double>((x & y).count()) / static_cast<double>((x | y).count());
    EXPECT_EQ(jaccard(a, b), expect);
  }
}

TEST(Forgetting, Examples) {
  EXPECT_EQ(forgetting_score({{0.5, 0.5}, {0.5, 0.5}}), 0.0);
  // Segment 0 falls from 0.9 to 0.2; segment 1 never drops.
  EXPECT_NEAR(forgetting_score({{0.9, 0.1}, {0.2, 0.8}}), 0.35, 1e-15);
  EXPECT_THROW(forgetting_score({{0.5}}), ContractViolation);
}

TEST(Forgetting, RandomRecomputation) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<std::vector<double>> j(n, std::vector<double>(n));
    for (auto& row : j)
      for (double& v : row) v = rng.uniform();
    double total = 0.0, retro = 0.0;
    std::size_t cells = 0;
    for (std::size_t s = 0; s < n; ++s) {
      double peak = 0.0;
      for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, j[i][s]);
      total += peak - j[n - 1][s];
      for (std::size_t i = s; i < n; ++i, ++cells) retro += j[i][s];
    }
    EXPECT_NEAR(forgetting_score(j), total / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(mean_retrospective_jaccard(j), retro / static_cast<double>(cells), 1e-12);
    EXPECT_GE(forgetting_score(j), 0.0);
  }
}

TEST(Evaluate, ShapeAndRange) {
  const auto spec = tiny_spec(3, 5);
  const SyntheticSource src(spec, 2);
  const RunResult r = run_stream(src, config(Method::Baseline, 1));
  const auto j = evaluate(r.snapshots, src.holdouts());
  ASSERT_EQ(j.size(), 3u);
  for (const auto& row : j) {
    ASSERT_EQ(row.size(), 3u);
    for (double v : row) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

}  // namespace
}  // namespace dg
