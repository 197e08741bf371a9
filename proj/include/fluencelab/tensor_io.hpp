// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// FLT1 binary tensor format:
//   bytes 0..3   magic "FLT1"
//   u32 LE       rank
//   rank x u32   dims (row-major, outermost first)
//   f32 LE       prod(dims) values

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Serializes to an in-memory FLT1 byte string.
inline std::string encode_tensor(std::span<const std::uint32_t> dims, std::span<const float> values) {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size())
    throw ConfigError("tensor dims product " + std::to_string(count) + " does not match buffer length " +
                      std::to_string(values.size()));
  std::string out = "FLT1";
  out.reserve(8 + 4 * dims.size() + 4 * values.size());
  detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::put_u32(out, d);
  for (float v : values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline RawTensor decode_tensor(std::span<const unsigned char> bytes, const std::string& origin) {
  if (bytes.size() < 8) throw DataError(origin + ": truncated FLT1 header");
  if (std::memcmp(bytes.data(), "FLT1", 4) != 0) throw DataError(origin + ": bad magic (expected FLT1)");
  const std::uint32_t rank = detail::get_u32(bytes.data() + 4);
  const std::uint64_t header = 8 + 4ULL * rank;
  if (bytes.size() < header) throw DataError(origin + ": truncated FLT1 dims");
  RawTensor t;
  t.dims.resize(rank);
  std::uint64_t count = 1;
  constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims[i] = detail::get_u32(bytes.data() + 8 + 4 * i);
    if (t.dims[i] != 0 && count > kMaxElements / t.dims[i]) throw DataError(origin + ": dims overflow");
    count *= t.dims[i];
  }
  if (bytes.size() != header + 4 * count)
    throw DataError(origin + ": payload size " + std::to_string(bytes.size() - header) + " does not match dims (" +
                    std::to_string(4 * count) + " bytes expected)");
  t.values.resize(count);
  const unsigned char* p = bytes.data() + header;
  for (std::uint64_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
  return t;
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                         std::span<const float> values) {
  write_bytes(path, encode_tensor(dims, values));
}

inline RawTensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode_tensor(bytes, path.string());
}

}  // namespace fluencelab
