// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "driftgate/errors.hpp"
#include "driftgate/sample_memory.hpp"
#include "test_util.hpp"

namespace dg {
namespace {

MemorySlot slot(std::uint64_t frame, bool gt = false, GridShape g = {1, 2, 2}) {
  return MemorySlot{FeatureGrid(g), MaskGrid(g.height, g.width, MaskKind::BinaryLabel), frame, 0, gt};
}

std::vector<std::uint64_t> frames(const SampleMemory& m) {
  std::vector<std::uint64_t> out;
  for (const auto& s : m.slots()) out.push_back(s.frame_index);
  return out;
}

TEST(SampleMemory, FifoTraceKeepsGroundTruth) {
  SampleMemory m(3);
  m.insert(slot(0, true));
  for (std::uint64_t f = 1; f <= 5; ++f) m.insert(slot(f));
  EXPECT_EQ(frames(m), (std::vector<std::uint64_t>{0, 4, 5}));
  ASSERT_NE(m.ground_truth(), nullptr);
  EXPECT_EQ(m.ground_truth()->frame_index, 0u);
}

TEST(SampleMemory, NoEvictionWhenNotFull) {
  SampleMemory m(4);
  m.insert(slot(0, true));
  const EvictionReport r = m.insert(slot(1));
  EXPECT_TRUE(r.inserted);
  EXPECT_FALSE(r.evicted_frame.has_value());
}

TEST(SampleMemory, EvictsMinimalInsertStep) {
  SampleMemory m(4);
  m.insert(slot(0, true));
  for (std::uint64_t f = 1; f < 40; ++f) {
    std::uint64_t oldest = UINT64_MAX;
    for (const auto& s : m.slots()) {
      if (!s.is_ground_truth) oldest = std::min(oldest, s.insert_step);
    }
    std::uint64_t oldest_frame = 0;
    for (const auto& s : m.slots()) {
      if (!s.is_ground_truth && s.insert_step == oldest) {
        oldest_frame = s.frame_index;
        break;
      }
    }
    const bool full = m.size() == m.capacity();
    const EvictionReport r = m.insert(slot(f));
    if (full) {
      ASSERT_TRUE(r.evicted_frame.has_value());
      EXPECT_EQ(*r.evicted_frame, oldest_frame);
    }
    if (f % 3 == 0) m.tick();
  }
}

TEST(SampleMemory, FixedFootprintOverTenThousandInserts) {
  SampleMemory m(32);
  m.insert(slot(0, true));
  for (std::uint64_t f = 1; f <= 10000; ++f) {
    m.insert(slot(f));
    ASSERT_LE(m.size(), 32u);
    if (f >= 31) {
      ASSERT_EQ(m.size(), 32u);
    }
    ASSERT_NE(m.ground_truth(), nullptr);
    m.tick();
  }
}

TEST(SampleMemory, DimensionMismatchThrows) {
  SampleMemory m(4);
  m.insert(slot(0, true));
  EXPECT_THROW(m.insert(slot(1, false, {2, 2, 2})), ContractViolation);
}

TEST(SampleMemory, SecondGroundTruthRejected) {
  SampleMemory m(4);
  m.insert(slot(0, true));
  EXPECT_THROW(m.insert(slot(1, true)), ContractViolation);
}

TEST(TemporalWeights, NoDecayIsUniform) {
  SampleMemory m(8);
  m.insert(slot(0, true));
  for (int i = 1; i < 5; ++i) {
    m.tick();
    m.insert(slot(i));
  }
  for (double w : m.temporal_weights(1.0)) EXPECT_NEAR(w, 0.2, 1e-15);
}

TEST(TemporalWeights, TwoSlotClosedForm) {
  // A non-annotated pair so the floor cannot bind.
  SampleMemory m(4);
  m.insert(slot(1));
  m.tick();
  m.insert(slot(2));
  const auto w = m.temporal_weights(0.5);
  EXPECT_NEAR(w[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 1e-15);
}

TEST(TemporalWeights, NormalisedAndNonincreasingInAge) {
  Rng rng(1);
  SampleMemory m(16);
  m.insert(slot(0, true));
  for (std::uint64_t f = 1; f < 60; ++f) {
    if (rng.uniform() < 0.5) m.tick();
    m.insert(slot(f));
  }
  const double base = 0.8;
  const auto w = m.temporal_weights(base);
  double sum = 0.0;
  for (double x : w) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto& s = m.slots();
  // The annotated slot is floored at the mean raw weight before normalising.
  double raw_sum = 0.0, raw_gt = 0.0;
  for (const auto& slot : s) {
    const double r = std::pow(base, static_cast<double>(m.step() - slot.insert_step));
    raw_sum += r;
    if (slot.is_ground_truth) raw_gt = r;
  }
  const double floor = raw_sum / static_cast<double>(s.size());
  const double total = raw_sum - raw_gt + std::max(raw_gt, floor);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].is_ground_truth) {
      EXPECT_NEAR(w[i], std::max(raw_gt, floor) / total, 1e-12);
      continue;
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j].is_ground_truth) continue;
      if (s[i].insert_step < s[j].insert_step) {
        EXPECT_LE(w[i], w[j]);
      }
    }
  }
}

TEST(TemporalWeights, EmptyMemoryThrows) { EXPECT_THROW(SampleMemory(4).temporal_weights(0.9), ContractViolation); }

TEST(UnitSize, CanonicalNumbers) {
  EXPECT_EQ(unit_size_bits({512, 30, 52}, 30, 52, 64), 51119640u);
  EXPECT_EQ(gate_unit_size_bits(kCanonicalModelShape), 73728u);
  EXPECT_NEAR(51119640.0 / 73728.0, 693.35, 0.01);
  EXPECT_EQ(unit_size_bits({1, 1, 1}, 1, 1, 1), 2u);
}

TEST(UnitSize, ArithmeticOracle) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t c = 1 + rng.below(600), h = 1 + rng.below(80), w = 1 + rng.below(80);
    const std::uint64_t bits = 1 + rng.below(64);
    EXPECT_EQ(unit_size_bits({c, h, w}, h, w, bits), c * h * w * bits + h * w);
    const std::uint64_t o = 1 + rng.below(32);
    EXPECT_EQ(gate_unit_size_bits({o, c}), o * c * 9);
  }
}

TEST(MemoryDump, RoundTripAndSize) {
  Rng rng(3);
  const GridShape g{3, 5, 3};
  SampleMemory m(4);
  m.insert(MemorySlot{test::random_grid(rng, g), test::random_mask(rng, 5, 3), 0, 0, true});
  m.tick();
  m.insert(MemorySlot{test::random_grid(rng, g), test::random_mask(rng, 5, 3), 7, 0, false});
  const auto dir = test::scratch_dir("dump");
  dump_memory(dir / "m.bin", m);
  // 8 + 8 + 1 + 45 * 8 + ceil(15 / 8)
  EXPECT_EQ(std::filesystem::file_size(dir / "m.bin"), 2u * (17u + 360u + 2u));
  const auto back = load_memory_dump(dir / "m.bin", g);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].feature, m.slots()[i].feature);
    EXPECT_EQ(back[i].mask, m.slots()[i].mask);
    EXPECT_EQ(back[i].frame_index, m.slots()[i].frame_index);
    EXPECT_EQ(back[i].insert_step, m.slots()[i].insert_step);
    EXPECT_EQ(back[i].is_ground_truth, m.slots()[i].is_ground_truth);
  }
}

TEST(MemoryDump, TruncatedFileRejected) {
  Rng rng(4);
  SampleMemory m(2);
  m.insert(MemorySlot{test::random_grid(rng, {1, 2, 2}), test::random_mask(rng, 2, 2), 0, 0, true});
  const auto dir = test::scratch_dir("dump_bad");
  dump_memory(dir / "m.bin", m);
  std::filesystem::resize_file(dir / "m.bin", std::filesystem::file_size(dir / "m.bin") - 3);
  EXPECT_THROW(load_memory_dump(dir / "m.bin", {1, 2, 2}), FormatError);
}

}  // namespace
}  // namespace dg
