// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Values are
// mapped through [0, L] and clamped, so a round trip is exact to L/65535.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"
#include "fluencelab/types.hpp"

namespace fluencelab {

inline void write_pgm(const std::filesystem::path& path, const Slice2D& img, double value_range) {
  if (!(value_range > 0)) throw ConfigError("PGM value range must be > 0");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(img.values().size() * 2);
  for (float v : img.values()) {
    const double t = std::clamp(static_cast<double>(v) / value_range, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(t * 65535.0));
    bytes.push_back(static_cast<unsigned char>(q >> 8));
    bytes.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline Slice2D read_pgm(const std::filesystem::path& path, double value_range) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  // Header tokens may be separated by any whitespace and '#' comments.
  auto token = [&] {
    std::string t;
    char ch = 0;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        t += ch;
        break;
      }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) t += ch;
    return t;
  };
  if (token() != "P5") throw DataError(path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval != 65535) throw DataError(path.string() + ": expected a 16-bit PGM");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated PGM");
  Slice2D img(h, w);
  const auto v = img.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<float>(((bytes[2 * i] << 8) | bytes[2 * i + 1]) / 65535.0 * value_range);
  return img;
}

}  // namespace fluencelab
