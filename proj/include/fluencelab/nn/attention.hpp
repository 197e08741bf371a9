// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Shifted-window multi-head self-attention core.
//
// The op takes a fused Q/K/V map (3C x H x W, produced by a 1x1 conv) and
// returns the per-head attention outputs (C x H x W). Windows are taken on
// the image cyclically rolled by -shift; results are written back to the
// source pixels, so the roll is undone implicitly. No attention mask is
// applied across the wrapped border.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <vector>

#include "fluencelab/nn/tape.hpp"

namespace fluencelab::nn {

namespace detail {

struct WindowLayout {
  int h, w, window, shift;
  int windows_x() const { return w / window; }
  int count() const { return (h / window) * (w / window); }
  int tokens() const { return window * window; }
  /// Flat pixel index of token `t` of window `n`.
  std::size_t pixel(int n, int t) const {
    const int wy = n / windows_x(), wx = n % windows_x();
    const int y = (wy * window + t / window + shift) % h;
    const int x = (wx * window + t % window + shift) % w;
    return static_cast<std::size_t>(y) * w + x;
  }
};

}  // namespace detail

/// Attention rows (softmax weights) of every window and head, for
/// inspection: [window][head] -> tokens x tokens, row-major.
using AttentionWeights = std::vector<std::vector<std::vector<float>>>;

inline Tape::Id window_attention(Tape& tape, Tape::Id qkv_id, int heads, int window, int shift,
                                 AttentionWeights* intercept = nullptr) {
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Tensor& qkv = tape.value(qkv_id);
  if (qkv.c % 3 != 0) throw ConfigError("window_attention: expected 3C channels");
  const int c = qkv.c / 3;
  if (heads < 1 || c % heads != 0) throw ConfigError("window_attention: channels not divisible by heads");
  if (window < 1 || qkv.h % window != 0 || qkv.w % window != 0)
    throw ConfigError("window_attention: spatial size not divisible by window");
  const detail::WindowLayout lay{qkv.h, qkv.w, window, ((shift % window) + window) % window};
  const int d = c / heads, n = lay.tokens(), nw = lay.count();
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
  const std::size_t plane = qkv.plane();

  auto gather = [&](const Tensor& src, int win, int ch0, Mat& m) {
    m.resize(n, d);
    for (int t = 0; t < n; ++t) {
      const std::size_t p = lay.pixel(win, t);
      for (int j = 0; j < d; ++j) m(t, j) = src.v[(ch0 + j) * plane + p];
    }
  };

  auto attn = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(nw) * heads);
  Tensor out(c, qkv.h, qkv.w);
  Mat q, k, v;
  if (intercept) intercept->assign(nw, std::vector<std::vector<float>>(heads));
  for (int win = 0; win < nw; ++win)
    for (int hd = 0; hd < heads; ++hd) {
      gather(qkv, win, hd * d, q);
      gather(qkv, win, c + hd * d, k);
      gather(qkv, win, 2 * c + hd * d, v);
      Mat s = (q * k.transpose()) * scale;
      for (int r = 0; r < n; ++r) {
        const float mx = s.row(r).maxCoeff();
        double total = 0;
        for (int j = 0; j < n; ++j) total += s(r, j) = std::exp(s(r, j) - mx);
        for (int j = 0; j < n; ++j) s(r, j) = static_cast<float>(s(r, j) / total);
      }
      const Mat o = s * v;
      for (int t = 0; t < n; ++t) {
        const std::size_t p = lay.pixel(win, t);
        for (int j = 0; j < d; ++j) out.v[(hd * d + j) * plane + p] = o(t, j);
      }
      if (intercept) (*intercept)[win][hd].assign(s.data(), s.data() + s.size());
      (*attn)[static_cast<std::size_t>(win) * heads + hd] = std::move(s);
    }

  const Tape::Id self = tape.size();
  return tape.push(std::move(out), [=](Tape& t, Gradients&) {
    if (!t.requires_grad(qkv_id)) return;
    const Tensor& x = t.value(qkv_id);
    const Tensor& dy = t.grad(self);
    Tensor& dx = t.grad(qkv_id);
    auto gath = [&](const Tensor& src, int win, int ch0, Mat& m) {
      m.resize(n, d);
      for (int tk = 0; tk < n; ++tk) {
        const std::size_t p = lay.pixel(win, tk);
        for (int j = 0; j < d; ++j) m(tk, j) = src.v[(ch0 + j) * plane + p];
      }
    };
    auto scatter = [&](const Mat& m, int win, int ch0) {
      for (int tk = 0; tk < n; ++tk) {
        const std::size_t p = lay.pixel(win, tk);
        for (int j = 0; j < d; ++j) dx.v[(ch0 + j) * plane + p] += m(tk, j);
      }
    };
    Mat q2, k2, v2, dout;
    for (int win = 0; win < nw; ++win)
      for (int hd = 0; hd < heads; ++hd) {
        const Mat& a = (*attn)[static_cast<std::size_t>(win) * heads + hd];
        gath(x, win, hd * d, q2);
        gath(x, win, c + hd * d, k2);
        gath(x, win, 2 * c + hd * d, v2);
        gath(dy, win, hd * d, dout);
        const Mat da = dout * v2.transpose();
        const Mat dv = a.transpose() * dout;
        Mat ds = da;
        for (int r = 0; r < n; ++r) {
          double dot = 0;
          for (int j = 0; j < n; ++j) dot += static_cast<double>(da(r, j)) * a(r, j);
          for (int j = 0; j < n; ++j) ds(r, j) = static_cast<float>(a(r, j) * (da(r, j) - dot));
        }
        scatter((ds * k2) * scale, win, hd * d);
        scatter((ds.transpose() * q2) * scale, win, c + hd * d);
        scatter(dv, win, 2 * c + hd * d);
      }
  });
}

}  // namespace fluencelab::nn
