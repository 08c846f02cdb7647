// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0

#include "driftgate/gate_map.hpp"

#include <bit>
#include <fstream>

#include "driftgate/binary_io.hpp"
#include "driftgate/errors.hpp"

namespace dg {

namespace {
constexpr char kGateMagic[5] = "DGGM";
constexpr std::uint32_t kGateVersion = 1;
}  // namespace

GateMap::GateMap(std::size_t param_count, std::int64_t created_step)
    : size_(param_count), created_step_(created_step), words_((param_count + 63) / 64, 0) {}

void GateMap::set(std::size_t k, bool value) {
  require(k < size_, "GateMap::set: index out of range");
  const std::uint64_t bit = std::uint64_t{1} << (k & 63);
  if (value) {
    words_[k >> 6] |= bit;
  } else {
    words_[k >> 6] &= ~bit;
  }
}

std::size_t GateMap::popcount() const {
  std::size_t n = 0;
  for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

GateMap& GateMap::operator|=(const GateMap& other) {
  require(size_ == other.size_, "GateMap: OR of maps with different parameter counts");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

GateMap GateMap::all_ones(std::size_t param_count) {
  GateMap map(param_count);
  for (std::size_t k = 0; k < param_count; ++k) map.set(k);
  return map;
}

void write_gate_map(const std::filesystem::path& path, const GateMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  io::put_magic(out, kGateMagic);
  io::put_le<std::uint32_t>(out, kGateVersion);
  io::put_le<std::uint64_t>(out, map.size());
  io::put_bytes(out, io::pack_bits(map.size(), [&](std::size_t k) { return map.test(k); }));
  io::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(map.created_step()));
  if (!out) throw FormatError("write failed for " + path.string());
}

GateMap read_gate_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, kGateMagic);
  const auto version = io::get_le<std::uint32_t>(in);
  if (version != kGateVersion) throw FormatError("unsupported gate map version " + std::to_string(version));
  const auto k = io::get_le<std::uint64_t>(in);
  const auto bytes = io::get_bytes(in, static_cast<std::size_t>((k + 7) / 8));
  GateMap map(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (io::unpacked_bit(bytes, i)) map.set(i);
  }
  map.set_created_step(static_cast<std::int64_t>(io::get_le<std::uint64_t>(in)));
  return map;
}

}  // namespace dg
