// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/sample_memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "driftgate/binary_io.hpp"
#include "driftgate/errors.hpp"

namespace dg {

SampleMemory::SampleMemory(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, "SampleMemory: capacity must be positive");
  slots_.reserve(capacity);
}

const MemorySlot* SampleMemory::ground_truth() const {
  for (const auto& s : slots_) {
    if (s.is_ground_truth) return &s;
  }
  return nullptr;
}

EvictionReport SampleMemory::insert(MemorySlot slot) {
  require(slot.mask.kind() == MaskKind::BinaryLabel, "SampleMemory::insert: memory masks must be binary labels");
  require(slot.mask.height() == slot.feature.height() && slot.mask.width() == slot.feature.width(),
          "SampleMemory::insert: mask size does not match feature size");
  if (!slots_.empty()) {
    require(slot.feature.shape() == slots_.front().feature.shape(),
            "SampleMemory::insert: feature shape differs from stored slots");
  }
  if (slot.is_ground_truth) {
    require(ground_truth() == nullptr, "SampleMemory::insert: memory already holds an annotated slot");
  }
  slot.insert_step = step_;

  EvictionReport report;
  if (slots_.size() == capacity_) {
    // Slots are kept in insertion order, so the first non-annotated one is the oldest.
    auto victim = std::find_if(slots_.begin(), slots_.end(), [](const MemorySlot& s) { return !s.is_ground_truth; });
    if (victim == slots_.end()) return report;
    report.evicted_frame = victim->frame_index;
    slots_.erase(victim);
  }
  slots_.push_back(std::move(slot));
  report.inserted = true;
  return report;
}

std::vector<double> SampleMemory::temporal_weights(double decay_base) const {
  require(!slots_.empty(), "temporal_weights: memory is empty");
  require(decay_base > 0.0 && decay_base <= 1.0, "temporal_weights: decay base must lie in (0, 1]");
  std::vector<double> d(slots_.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto age = static_cast<double>(step_ - slots_[i].insert_step);
    d[i] = std::pow(decay_base, age);
    sum += d[i];
  }
  const double mean = sum / static_cast<double>(d.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].is_ground_truth && d[i] < mean) d[i] = mean;
  }
  double total = 0.0;
  for (double v : d) total += v;
  for (double& v : d) v /= total;
  return d;
}

std::uint64_t unit_size_bits(GridShape feature, std::size_t mask_height, std::size_t mask_width,
                             std::uint64_t float_bits) {
  require(feature.size() > 0 && mask_height > 0 && mask_width > 0 && float_bits > 0,
          "unit_size_bits: dimensions must be positive");
  return static_cast<std::uint64_t>(feature.size()) * float_bits +
         static_cast<std::uint64_t>(mask_height) * mask_width;
}

std::uint64_t gate_unit_size_bits(ModelShape model) {
  require(model.param_count() > 0, "gate_unit_size_bits: dimensions must be positive");
  return model.param_count();
}

void write_slot_record(std::ostream& out, const MemorySlot& slot) {
  io::put_le<std::uint64_t>(out, slot.frame_index);
  io::put_le<std::uint64_t>(out, slot.insert_step);
  io::put_u8(out, slot.is_ground_truth ? 1 : 0);
  for (double v : slot.feature.values()) io::put_f64(out, v);
  auto mask = slot.mask.values();
  io::put_bytes(out, io::pack_bits(mask.size(), [&](std::size_t i) { return mask[i] > 0.5; }));
}

MemorySlot read_slot_record(std::istream& in, GridShape shape) {
  MemorySlot slot;
  slot.frame_index = io::get_le<std::uint64_t>(in);
  slot.insert_step = io::get_le<std::uint64_t>(in);
  const std::uint8_t gt = io::get_u8(in);
  if (gt > 1) throw FormatError("slot record: is_ground_truth must be 0 or 1");
  slot.is_ground_truth = gt == 1;
  std::vector<double> values(shape.size());
  for (double& v : values) v = io::get_f64(in);
  for (double v : values) {
    if (!std::isfinite(v)) throw FormatError("slot record: non-finite feature value");
  }
  slot.feature = FeatureGrid(shape, std::move(values));
  const auto bytes = io::get_bytes(in, (shape.plane() + 7) / 8);
  std::vector<double> mask(shape.plane());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = io::unpacked_bit(bytes, i) ? 1.0 : 0.0;
  slot.mask = MaskGrid(shape.height, shape.width, MaskKind::BinaryLabel, std::move(mask));
  return slot;
}

void dump_memory(const std::filesystem::path& path, const SampleMemory& memory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& s : memory.slots()) write_slot_record(out, s);
  if (!out) throw FormatError("write failed for " + path.string());
}

std::vector<MemorySlot> load_memory_dump(const std::filesystem::path& path, GridShape shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<MemorySlot> slots;
  while (in.peek() != std::char_traits<char>::eof()) slots.push_back(read_slot_record(in, shape));
  return slots;
}

}  // namespace dg
