// Copyright 2026 The driftgate Authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian primitives shared by the on-disk formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "driftgate/errors.hpp"

namespace dg::io {

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFFU));
  }
}

inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline std::uint8_t get_u8(std::istream& in) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) throw FormatError("unexpected end of file");
  return static_cast<std::uint8_t>(c);
}

template <typename T>
T get_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(get_u8(in)) << (8 * i);
  return static_cast<T>(v);
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4] = {};
  in.read(buf, 4);
  if (in.gcount() != 4 || std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
}

/// LSB-first bit packing: bit i lives in byte i / 8 at position i % 8.
template <typename BitFn>
std::vector<std::uint8_t> pack_bits(std::size_t count, BitFn&& bit) {
  std::vector<std::uint8_t> bytes((count + 7) / 8, 0);
  for (std::size_t i = 0; i < count; ++i) {
    if (bit(i)) bytes[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
  }
  return bytes;
}

inline bool unpacked_bit(std::span<const std::uint8_t> bytes, std::size_t i) {
  return (bytes[i / 8] >> (i % 8)) & 1U;
}

inline std::vector<std::uint8_t> get_bytes(std::istream& in, std::size_t count) {
  std::vector<std::uint8_t> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) throw FormatError("unexpected end of file");
  return bytes;
}

inline void put_bytes(std::ostream& out, std::span<const std::uint8_t> bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dg::io
