// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fluencelab {

/// Invalid configuration, arguments, or violated preconditions.
/// The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// I/O failures, malformed files, and data-dependent runtime failures.
/// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fluencelab
