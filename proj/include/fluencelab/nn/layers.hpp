// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <numeric>
#include <string>

#include "fluencelab/nn/attention.hpp"
#include "fluencelab/nn/ops.hpp"

namespace fluencelab::nn {

struct ConvParams {
  std::size_t w = kNoParam, b = kNoParam;
};

struct NormParams {
  std::size_t g = kNoParam, b = kNoParam;
  int groups = 1;
};

/// Weight [cout, cin, k, k] with fan-in uniform init (default), zero bias.
inline ConvParams add_conv(ParamStore& ps, const std::string& name, int cin, int cout, int k, Rng& rng,
                           Init init = Init::kFanIn) {
  ConvParams p;
  p.w = ps.add(name + ".w", {cout, cin, k, k}, init, cin * k * k, rng);
  p.b = ps.add(name + ".b", {cout}, Init::kZero, 1, rng);
  return p;
}

/// Unit scale, zero shift; groups = gcd(channels, 4) for GroupNorm use.
inline NormParams add_norm(ParamStore& ps, const std::string& name, int c) {
  Rng unused(0);
  NormParams p;
  p.g = ps.add(name + ".g", {c}, Init::kOne, 1, unused);
  p.b = ps.add(name + ".b", {c}, Init::kZero, 1, unused);
  p.groups = std::gcd(c, 4);
  return p;
}

inline Tape::Id conv(Tape& t, Tape::Id x, const ConvParams& p, int stride = 1, int pad = -1) {
  return conv2d(t, x, p.w, p.b, stride, pad);
}

inline Tape::Id group_norm(Tape& t, Tape::Id x, const NormParams& p) { return group_norm(t, x, p.groups, p.g, p.b); }

struct SwinBlockParams {
  NormParams ln1, ln2;
  ConvParams qkv, proj, fc1, fc2;
};

inline SwinBlockParams add_swin_block(ParamStore& ps, const std::string& name, int c, Rng& rng) {
  SwinBlockParams p;
  p.ln1 = add_norm(ps, name + ".ln1", c);
  p.qkv = add_conv(ps, name + ".qkv", c, 3 * c, 1, rng);
  p.proj = add_conv(ps, name + ".proj", c, c, 1, rng);
  p.ln2 = add_norm(ps, name + ".ln2", c);
  p.fc1 = add_conv(ps, name + ".fc1", c, 2 * c, 1, rng);
  p.fc2 = add_conv(ps, name + ".fc2", 2 * c, c, 1, rng);
  return p;
}

/// Pre-norm transformer block: x + proj(attn(ln(x))), then x + fc2(gelu(fc1(ln(x)))).
inline Tape::Id swin_block(Tape& t, Tape::Id x, const SwinBlockParams& p, int heads, int window, int shift,
                           AttentionWeights* intercept = nullptr) {
  const auto qkv = conv(t, channel_norm(t, x, p.ln1.g, p.ln1.b), p.qkv);
  const auto att = window_attention(t, qkv, heads, window, shift, intercept);
  x = add(t, x, conv(t, att, p.proj));
  const auto hidden = gelu(t, conv(t, channel_norm(t, x, p.ln2.g, p.ln2.b), p.fc1));
  return add(t, x, conv(t, hidden, p.fc2));
}

}  // namespace fluencelab::nn
