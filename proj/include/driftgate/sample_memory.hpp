// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "driftgate/numerics.hpp"
#include "driftgate/target_model.hpp"

namespace dg {

struct MemorySlot {
  FeatureGrid feature;
  MaskGrid mask;
  std::uint64_t frame_index = 0;
  std::uint64_t insert_step = 0;
  bool is_ground_truth = false;
};

struct EvictionReport {
  bool inserted = false;
  std::optional<std::uint64_t> evicted_frame;
};

/// Fixed-capacity store of (feature, mask) pairs. The annotated slot is never
/// evicted; other slots leave in insertion order once the store is full.
class SampleMemory {
 public:
  static constexpr std::size_t kDefaultCapacity = 32;

  explicit SampleMemory(std::size_t capacity = kDefaultCapacity);

  /// Stamps the slot with the current step. A full memory evicts its oldest
  /// non-annotated slot first; if none exists the new slot is dropped.
  EvictionReport insert(MemorySlot slot);

  /// d_n = base^(step - insert_step), annotated slot floored at the mean,
  /// normalised to sum 1. Order follows slots().
  std::vector<double> temporal_weights(double decay_base) const;

  /// Advances the update-step clock used for slot ages.
  void tick() { ++step_; }
  std::uint64_t step() const { return step_; }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  const std::vector<MemorySlot>& slots() const { return slots_; }
  const MemorySlot* ground_truth() const;

 private:
  std::size_t capacity_;
  std::uint64_t step_ = 0;
  std::vector<MemorySlot> slots_;
};

/// Bits in one memory unit: C*H*W features at `float_bits` each plus an
/// H*W binary mask.
std::uint64_t unit_size_bits(GridShape feature, std::size_t mask_height, std::size_t mask_width,
                             std::uint64_t float_bits);
/// Bits in one gate map: one per target-model parameter.
std::uint64_t gate_unit_size_bits(ModelShape model);

/// Slot record: frame_index u64, insert_step u64, is_ground_truth u8,
/// C*H*W f64 features, ceil(H*W/8) bytes of LSB-first packed mask bits.
void write_slot_record(std::ostream& out, const MemorySlot& slot);
MemorySlot read_slot_record(std::istream& in, GridShape shape);

/// A dump is the concatenation of slot records in memory order.
void dump_memory(const std::filesystem::path& path, const SampleMemory& memory);
std::vector<MemorySlot> load_memory_dump(const std::filesystem::path& path, GridShape shape);

}  // namespace dg
