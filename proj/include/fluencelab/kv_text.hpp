// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Line-oriented `key = value` text used for manifests, case headers,
// checkpoint indices and config files.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

/// Shortest text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + what + ": '" + text + "'");
  }
}

inline long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + what + ": '" + text + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid unsigned integer for " + what + ": '" + text + "'");
  }
}

inline bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean for " + what + ": '" + text + "'");
}

/// Ordered list of key/value pairs. Order is preserved on write so files
/// round-trip byte-for-byte.
class KeyValueText {
 public:
  using Entry = std::pair<std::string, std::string>;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  bool has(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.first == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.first == key) return e.second;
    throw DataError("missing key '" + key + "'");
  }

  double get_double(const std::string& key) const { return parse_double(get(key), key); }
  long long get_int(const std::string& key) const { return parse_int(get(key), key); }

  const std::vector<Entry>& entries() const { return entries_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  static KeyValueText parse(const std::string& text, const std::string& origin) {
    KeyValueText kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      if (kv.has(key))
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      kv.entries_.emplace_back(key, trim(t.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValueText read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_string();
    if (!out) throw DataError("write failed: " + path.string());
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace fluencelab
