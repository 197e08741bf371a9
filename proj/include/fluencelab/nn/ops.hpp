// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable per-sample ops. Convolutions lower to one GEMM through
// im2col; normalizations reduce in double.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "fluencelab/nn/tape.hpp"

namespace fluencelab::nn {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

namespace detail {

struct ConvGeom {
  int k, stride, pad, ho, wo;
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

inline void im2col(const Tensor& x, const ConvGeom& g, float* cols) {
  const std::size_t howo = static_cast<std::size_t>(g.ho) * g.wo;
  for (int ci = 0; ci < x.c; ++ci)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        float* dst = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * howo;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* row = dst + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= x.h) {
            std::fill(row, row + g.wo, 0.0f);
            continue;
          }
          const float* src = x.data() + (static_cast<std::size_t>(ci) * x.h + iy) * x.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            row[ox] = (ix >= 0 && ix < x.w) ? src[ix] : 0.0f;
          }
        }
      }
}

inline void col2im(const float* cols, const ConvGeom& g, Tensor& dx) {
  const std::size_t howo = static_cast<std::size_t>(g.ho) * g.wo;
  for (int ci = 0; ci < dx.c; ++ci)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const float* src = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * howo;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= dx.h) continue;
          float* dst = dx.data() + (static_cast<std::size_t>(ci) * dx.h + iy) * dx.w;
          const float* row = src + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < dx.w) dst[ix] += row[ox];
          }
        }
      }
}

/// Shared backward of the two normalizations: given xhat, inv-std and the
/// upstream dxhat over one normalization set (strided view), writes dx.
template <class Index>
void norm_backward(std::size_t n, Index idx, const float* xhat, const float* dxhat, double inv, float* dx) {
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += dxhat[idx(i)];
    s2 += static_cast<double>(dxhat[idx(i)]) * xhat[idx(i)];
  }
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = idx(i);
    dx[j] += static_cast<float>(inv / dn * (dn * dxhat[j] - s1 - xhat[j] * s2));
  }
}

}  // namespace detail

/// 2D convolution; weight dims [cout, cin, k, k], optional bias [cout].
inline Tape::Id conv2d(Tape& tape, Tape::Id a, std::size_t wi, std::size_t bi, int stride = 1, int pad = -1) {
  const Tensor& x = tape.value(a);
  const Parameter& W = tape.params()[wi];
  const int cout = W.dims[0], cin = W.dims[1], k = W.dims[2];
  if (x.c != cin) throw ConfigError("conv2d '" + W.name + "': expected " + std::to_string(cin) + " channels, got " +
                                    std::to_string(x.c));
  if (pad < 0) pad = k / 2;
  const detail::ConvGeom g{k, stride, pad, (x.h + 2 * pad - k) / stride + 1, (x.w + 2 * pad - k) / stride + 1};
  const std::size_t howo = static_cast<std::size_t>(g.ho) * g.wo, ckk = static_cast<std::size_t>(cin) * k * k;

  std::shared_ptr<MatR> cols;
  if (!g.direct()) {
    cols = std::make_shared<MatR>(ckk, howo);
    detail::im2col(x, g, cols->data());
  }
  Tensor y(cout, g.ho, g.wo);
  MapR Y(y.data(), cout, howo);
  const CMapR Wm(W.value.data(), cout, ckk);
  if (g.direct())
    Y.noalias() = Wm * CMapR(x.data(), cin, howo);
  else
    Y.noalias() = Wm * *cols;
  if (bi != kNoParam) Y.colwise() += Eigen::Map<const Eigen::VectorXf>(tape.params()[bi].value.data(), cout);

  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients& grads) {
    const Tensor& dy = t.grad(self);
    const CMapR dY(dy.data(), cout, howo);
    const CMapR X = g.direct() ? CMapR(t.value(a).data(), cin, howo) : CMapR(cols->data(), ckk, howo);
    MapR(grads.g[wi].data(), cout, ckk).noalias() += dY * X.transpose();
    if (bi != kNoParam) Eigen::Map<Eigen::VectorXf>(grads.g[bi].data(), cout) += dY.rowwise().sum();
    if (!t.requires_grad(a)) return;
    const CMapR Wt(t.params()[wi].value.data(), cout, ckk);
    Tensor& dx = t.grad(a);
    if (g.direct()) {
      MapR(dx.data(), cin, howo).noalias() += Wt.transpose() * dY;
    } else {
      const MatR dcols = Wt.transpose() * dY;
      detail::col2im(dcols.data(), g, dx);
    }
  });
}

inline Tape::Id relu(Tape& tape, Tape::Id a) {
  Tensor y = tape.value(a);
  for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients&) {
    if (!t.requires_grad(a)) return;
    const Tensor& out = t.value(self);
    const Tensor& dy = t.grad(self);
    Tensor& dx = t.grad(a);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (out.v[i] > 0.0f) dx.v[i] += dy.v[i];
  });
}

/// Exact (erf) GELU.
inline Tape::Id gelu(Tape& tape, Tape::Id a) {
  Tensor y = tape.value(a);
  for (auto& v : y.v) v = static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients&) {
    if (!t.requires_grad(a)) return;
    const Tensor& x = t.value(a);
    const Tensor& dy = t.grad(self);
    Tensor& dx = t.grad(a);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = x.v[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      dx.v[i] += static_cast<float>(dy.v[i] * (cdf + v * pdf));
    }
  });
}

inline Tape::Id add(Tape& tape, Tape::Id a, Tape::Id b) {
  if (!tape.value(a).same_shape(tape.value(b))) throw ConfigError("add: shape mismatch");
  Tensor y = tape.value(a);
  const Tensor& bv = tape.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += bv.v[i];
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients&) {
    const Tensor& dy = t.grad(self);
    for (Tape::Id in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      Tensor& dx = t.grad(in);
      for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += dy.v[i];
    }
  });
}

/// Channel concatenation.
inline Tape::Id concat(Tape& tape, const std::vector<Tape::Id>& parts) {
  const Tensor& first = tape.value(parts.front());
  int c = 0;
  for (auto p : parts) {
    const Tensor& v = tape.value(p);
    if (v.h != first.h || v.w != first.w) throw ConfigError("concat: spatial mismatch");
    c += v.c;
  }
  Tensor y(c, first.h, first.w);
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& v = tape.value(p);
    std::copy(v.v.begin(), v.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients&) {
    const Tensor& dy = t.grad(self);
    std::size_t o = 0;
    for (auto p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor& dx = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) dx.v[i] += dy.v[o + i];
      }
      o += n;
    }
  });
}

/// Nearest-neighbour 2x upsampling.
inline Tape::Id upsample2(Tape& tape, Tape::Id a) {
  const Tensor& x = tape.value(a);
  Tensor y(x.c, 2 * x.h, 2 * x.w);
  for (int k = 0; k < x.c; ++k)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) y.at(k, yy, xx) = x.at(k, yy / 2, xx / 2);
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients&) {
    if (!t.requires_grad(a)) return;
    const Tensor& dy = t.grad(self);
    Tensor& dx = t.grad(a);
    for (int k = 0; k < dy.c; ++k)
      for (int yy = 0; yy < dy.h; ++yy)
        for (int xx = 0; xx < dy.w; ++xx) dx.at(k, yy / 2, xx / 2) += dy.at(k, yy, xx);
  });
}

inline constexpr double kNormEps = 1e-5;

/// Per-sample group normalization with per-channel affine.
inline Tape::Id group_norm(Tape& tape, Tape::Id a, int groups, std::size_t gi, std::size_t bi) {
  const Tensor& x = tape.value(a);
  if (groups < 1 || x.c % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
  const int cpg = x.c / groups;
  const std::size_t n = static_cast<std::size_t>(cpg) * x.plane();
  auto xhat = std::make_shared<Tensor>(x.c, x.h, x.w);
  auto inv = std::make_shared<std::vector<double>>(groups);
  for (int g = 0; g < groups; ++g) {
    const float* src = x.data() + g * n;
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(n);
    (*inv)[g] = 1.0 / std::sqrt(var + kNormEps);
    float* dst = xhat->data() + g * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>((src[i] - mean) * (*inv)[g]);
  }
  const auto& gamma = tape.params()[gi].value;
  const auto& beta = tape.params()[bi].value;
  Tensor y(x.c, x.h, x.w);
  for (int k = 0; k < x.c; ++k) {
    const auto src = xhat->channel(k);
    auto dst = y.channel(k);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = gamma[k] * src[i] + beta[k];
  }
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients& grads) {
    const Tensor& dy = t.grad(self);
    const auto& gam = t.params()[gi].value;
    for (int k = 0; k < dy.c; ++k) {
      const auto d = dy.channel(k);
      const auto xh = xhat->channel(k);
      double sg = 0, sb = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        sg += static_cast<double>(d[i]) * xh[i];
        sb += d[i];
      }
      grads.g[gi][k] += static_cast<float>(sg);
      grads.g[bi][k] += static_cast<float>(sb);
    }
    if (!t.requires_grad(a)) return;
    Tensor dxhat(dy.c, dy.h, dy.w);
    for (int k = 0; k < dy.c; ++k) {
      const auto d = dy.channel(k);
      auto dst = dxhat.channel(k);
      for (std::size_t i = 0; i < d.size(); ++i) dst[i] = d[i] * gam[k];
    }
    Tensor& dx = t.grad(a);
    for (int g = 0; g < groups; ++g) {
      const std::size_t off = g * n;
      detail::norm_backward(n, [off](std::size_t i) { return off + i; }, xhat->data(), dxhat.data(), (*inv)[g],
                            dx.data());
    }
  });
}

/// Layer normalization of each pixel's channel vector (token LayerNorm).
inline Tape::Id channel_norm(Tape& tape, Tape::Id a, std::size_t gi, std::size_t bi) {
  const Tensor& x = tape.value(a);
  const std::size_t plane = x.plane();
  auto xhat = std::make_shared<Tensor>(x.c, x.h, x.w);
  auto inv = std::make_shared<std::vector<double>>(plane);
  const auto& gamma = tape.params()[gi].value;
  const auto& beta = tape.params()[bi].value;
  Tensor y(x.c, x.h, x.w);
  for (std::size_t p = 0; p < plane; ++p) {
    double mean = 0, var = 0;
    for (int k = 0; k < x.c; ++k) mean += x.v[k * plane + p];
    mean /= x.c;
    for (int k = 0; k < x.c; ++k) var += (x.v[k * plane + p] - mean) * (x.v[k * plane + p] - mean);
    var /= x.c;
    (*inv)[p] = 1.0 / std::sqrt(var + kNormEps);
    for (int k = 0; k < x.c; ++k) {
      const float xh = static_cast<float>((x.v[k * plane + p] - mean) * (*inv)[p]);
      xhat->v[k * plane + p] = xh;
      y.v[k * plane + p] = gamma[k] * xh + beta[k];
    }
  }
  const Tape::Id self = tape.size();
  return tape.push(std::move(y), [=](Tape& t, Gradients& grads) {
    const Tensor& dy = t.grad(self);
    const auto& gam = t.params()[gi].value;
    for (int k = 0; k < dy.c; ++k) {
      const auto d = dy.channel(k);
      const auto xh = xhat->channel(k);
      double sg = 0, sb = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        sg += static_cast<double>(d[i]) * xh[i];
        sb += d[i];
      }
      grads.g[gi][k] += static_cast<float>(sg);
      grads.g[bi][k] += static_cast<float>(sb);
    }
    if (!t.requires_grad(a)) return;
    Tensor dxhat(dy.c, dy.h, dy.w);
    for (int k = 0; k < dy.c; ++k)
      for (std::size_t p = 0; p < plane; ++p) dxhat.v[k * plane + p] = dy.v[k * plane + p] * gam[k];
    Tensor& dx = t.grad(a);
    for (std::size_t p = 0; p < plane; ++p)
      detail::norm_backward(static_cast<std::size_t>(dy.c), [p, plane](std::size_t k) { return k * plane + p; },
                            xhat->data(), dxhat.data(), (*inv)[p], dx.data());
  });
}

}  // namespace fluencelab::nn
