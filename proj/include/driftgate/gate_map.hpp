// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dg {

/// Binary map over the K target-model parameters, aligned with the canonical
/// (C_out, C_in, ky, kx) weight layout. Bit 1 marks a gated (frozen) parameter.
class GateMap {
 public:
  GateMap() = default;
  explicit GateMap(std::size_t param_count, std::int64_t created_step = 0);

  std::size_t size() const { return size_; }
  std::int64_t created_step() const { return created_step_; }
  void set_created_step(std::int64_t step) { created_step_ = step; }

  bool test(std::size_t k) const { return (words_[k >> 6] >> (k & 63)) & 1U; }
  void set(std::size_t k, bool value = true);
  std::size_t popcount() const;
  bool none() const { return popcount() == 0; }

  GateMap& operator|=(const GateMap& other);
  /// Equality compares bits only; the creation step is metadata.
  bool operator==(const GateMap& other) const { return size_ == other.size_ && words_ == other.words_; }

  static GateMap all_ones(std::size_t param_count);

  const std::vector<std::uint64_t>& words() const { return words_; }

 private:
  std::size_t size_ = 0;
  std::int64_t created_step_ = 0;
  std::vector<std::uint64_t> words_;
};

/// "DGGM" file: magic, version u32, K u64, ceil(K/8) bytes of LSB-first
/// packed bits, created_step u64. All integers little-endian.
void write_gate_map(const std::filesystem::path& path, const GateMap& map);
GateMap read_gate_map(const std::filesystem::path& path);

}  // namespace dg
