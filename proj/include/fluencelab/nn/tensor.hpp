// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"
#include "fluencelab/random.hpp"

namespace fluencelab::nn {

/// One sample's feature map, channel-major (C x H x W).
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t size() const { return v.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool empty() const { return v.empty(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }
  std::span<float> channel(int k) { return {v.data() + k * plane(), plane()}; }
  std::span<const float> channel(int k) const { return {v.data() + k * plane(), plane()}; }
  float& at(int k, int y, int x) { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
  float at(int k, int y, int x) const { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Parameter {
  std::string name;
  std::vector<int> dims;
  std::vector<float> value;
};

/// kFanIn: uniform(+-1/sqrt(fan_in)). kHe: uniform(+-sqrt(6/fan_in)), which
/// keeps the second moment through unnormalized ReLU layers.
enum class Init { kFanIn, kHe, kZero, kOne, kConstant };

/// Ordered, named parameter table. Initialization draws from one seeded
/// stream in registration order.
class ParamStore {
 public:
  std::size_t add(const std::string& name, std::vector<int> dims, Init init, int fan_in, Rng& rng,
                  float constant = 0.0f) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    Parameter p{name, std::move(dims), std::vector<float>(n, 0.0f)};
    switch (init) {
      case Init::kFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : p.value) x = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case Init::kHe: {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& x : p.value) x = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case Init::kZero: break;
      case Init::kOne: std::fill(p.value.begin(), p.value.end(), 1.0f); break;
      case Init::kConstant: std::fill(p.value.begin(), p.value.end(), constant); break;
    }
    index_[p.name] = params_.size();
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient buffers shaped like a ParamStore.
struct Gradients {
  std::vector<std::vector<float>> g;

  Gradients() = default;
  explicit Gradients(const ParamStore& ps) {
    for (const auto& p : ps.all()) g.emplace_back(p.value.size(), 0.0f);
  }
  void zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0f);
  }
  void add(const Gradients& o, float scale = 1.0f) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t k = 0; k < g[i].size(); ++k) g[i][k] += scale * o.g[i][k];
  }
};

}  // namespace fluencelab::nn
