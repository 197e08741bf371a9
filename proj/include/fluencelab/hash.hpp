// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// 64-bit FNV-1a over raw bytes, used for golden outputs and
// reproducibility checks. Not a cryptographic hash.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001B3ULL;
    }
  }
  void floats(std::span<const float> v) { bytes(v.data(), v.size() * sizeof(float)); }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t hash_floats(std::span<const float> v) {
  Fnv1a h;
  h.floats(v);
  return h.value();
}

inline std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.bytes(data.data(), data.size());
  return h.value();
}

/// Hash of every regular file under `root`: relative paths and contents, in
/// sorted path order.
inline std::uint64_t hash_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.text(f.generic_string());
    const std::uint64_t c = hash_file(root / f);
    h.bytes(&c, sizeof c);
  }
  return h.value();
}

}  // namespace fluencelab
