// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Encoder-decoder regressors with a non-negative 1x1 regression head.
//
// conv_unet_s: two 3x3 conv / ReLU layers per level (optionally normalized), strided
// 2x2 conv downsampling, nearest upsampling and skip concatenation.
// win_attn_s: conv stem, then at every lower level a strided 2x2 conv and
// two shifted-window transformer blocks (shift 0 and window/2); the decoder
// is the same conv decoder. Both concatenate the raw input to the last
// decoder features so the head sees absolute intensities.
//
// Conv layers are unnormalized by default ("none"). GroupNorm ("group")
// pools statistics over the whole image, so a feature marking a region is
// rescaled by roughly 1/sqrt(region area) and the predicted beam energy
// barely varies with aperture size. A per-pixel channel norm ("pixel")
// keeps locality but discards each pixel's magnitude.

#pragma once

#include <string>
#include <vector>

#include "fluencelab/nn/layers.hpp"
#include "fluencelab/parallel.hpp"

namespace fluencelab {

enum class BackboneKind { kConvUnet, kWinAttn };

inline const char* to_string(BackboneKind k) { return k == BackboneKind::kConvUnet ? "conv_unet_s" : "win_attn_s"; }

inline BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "conv_unet_s") return BackboneKind::kConvUnet;
  if (s == "win_attn_s") return BackboneKind::kWinAttn;
  throw ConfigError("unknown backbone '" + s + "' (expected conv_unet_s or win_attn_s)");
}

enum class NormKind { kNone, kGroup, kPixel };

inline const char* to_string(NormKind k) {
  return k == NormKind::kNone ? "none" : k == NormKind::kGroup ? "group" : "pixel";
}

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "none") return NormKind::kNone;
  if (s == "group") return NormKind::kGroup;
  if (s == "pixel") return NormKind::kPixel;
  throw ConfigError("unknown normalization '" + s + "' (expected none, group or pixel)");
}

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kConvUnet;
  int in_channels = 2;
  int base = 16;
  int levels = 2;
  int window = 4;
  int heads = 2;
  int head_layers = 0;  // hidden 1x1 conv + ReLU layers before the output conv
  int head_width = 0;   // 0: same as base
  NormKind norm = NormKind::kNone;  // conv-layer normalization

  void validate() const {
    if (in_channels < 1 || base < 1 || levels < 1 || window < 1 || heads < 1 || head_layers < 0 || head_width < 0)
      throw ConfigError("backbone sizes must be positive");
    if (kind == BackboneKind::kWinAttn && base % heads != 0) throw ConfigError("backbone base must be divisible by heads");
  }

  /// Throws unless an H x W input fits the pyramid (and the windows).
  void check_input(int channels, int height, int width) const {
    if (channels != in_channels)
      throw ConfigError("model expects " + std::to_string(in_channels) + " input channels, got " +
                        std::to_string(channels));
    const int div = 1 << levels;
    if (height % div != 0 || width % div != 0)
      throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 2^levels");
    if (kind == BackboneKind::kWinAttn)
      for (int l = 1; l <= levels; ++l)
        if ((height >> l) % window != 0 || (width >> l) % window != 0)
          throw ConfigError("input size not divisible by the attention window at level " + std::to_string(l));
  }

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

class Model {
 public:
  Model(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x30DE1));
    build(rng);
  }

  const BackboneConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::size_t head_bias() const { return head_out_.b; }

  /// Records the forward pass of one sample; returns the 1 x H x W output.
  /// `intercept` receives the attention weights of the deepest block
  /// (win_attn_s only).
  nn::Tape::Id forward(nn::Tape& tape, nn::Tape::Id x, nn::AttentionWeights* intercept = nullptr) const {
    const auto& in = tape.value(x);
    cfg_.check_input(in.c, in.h, in.w);
    std::vector<nn::Tape::Id> skips;
    nn::Tape::Id h = x;
    if (cfg_.kind == BackboneKind::kConvUnet) {
      h = block(tape, h, enc_[0]);
    } else {
      h = nn::relu(tape, normalize(tape, nn::conv(tape, h, stem_), stem_norm_));
    }
    skips.push_back(h);
    for (int l = 1; l <= cfg_.levels; ++l) {
      h = nn::conv(tape, h, down_[l - 1], 2, 0);
      if (cfg_.kind == BackboneKind::kConvUnet) {
        h = block(tape, h, enc_[l]);
      } else {
        for (std::size_t b = 0; b < 2; ++b) {
          const bool last = (l == cfg_.levels && b == 1);
          h = nn::swin_block(tape, h, swin_[2 * (l - 1) + b], cfg_.heads, cfg_.window, b == 0 ? 0 : cfg_.window / 2,
                             last ? intercept : nullptr);
        }
      }
      skips.push_back(h);
    }
    for (int l = cfg_.levels - 1; l >= 0; --l)
      h = block(tape, nn::concat(tape, {nn::upsample2(tape, h), skips[l]}), dec_[l]);
    h = nn::concat(tape, {h, x});
    for (const auto& layer : head_hidden_) h = nn::relu(tape, nn::conv(tape, h, layer));
    return nn::relu(tape, nn::conv(tape, h, head_out_));
  }

  /// Inference on one sample.
  nn::Tensor predict(const nn::Tensor& x) const {
    nn::Tape tape(params_, false);
    return tape.take(forward(tape, tape.input(x)));
  }

  /// Inference on several samples; each result equals predict() on that
  /// sample alone, bit for bit.
  std::vector<nn::Tensor> predict_batch(const std::vector<nn::Tensor>& xs) const {
    std::vector<nn::Tensor> out(xs.size());
    parallel_for(static_cast<int>(xs.size()), [&](int i) { out[i] = predict(xs[i]); });
    return out;
  }

 private:
  struct BlockP {
    nn::ConvParams c1, c2;
    nn::NormParams n1, n2;
  };

  BlockP add_block(const std::string& name, int cin, int cout, Rng& rng) {
    BlockP p;
    p.c1 = nn::add_conv(params_, name + ".conv1", cin, cout, 3, rng, nn::Init::kHe);
    p.c2 = nn::add_conv(params_, name + ".conv2", cout, cout, 3, rng, nn::Init::kHe);
    if (cfg_.norm != NormKind::kNone) {
      p.n1 = nn::add_norm(params_, name + ".norm1", cout);
      p.n2 = nn::add_norm(params_, name + ".norm2", cout);
    }
    return p;
  }

  void build(Rng& rng) {
    auto width = [&](int l) { return cfg_.base << l; };
    if (cfg_.kind == BackboneKind::kConvUnet) {
      enc_.push_back(add_block("enc0", cfg_.in_channels, width(0), rng));
    } else {
      stem_ = nn::add_conv(params_, "stem", cfg_.in_channels, width(0), 3, rng, nn::Init::kHe);
      if (cfg_.norm != NormKind::kNone) stem_norm_ = nn::add_norm(params_, "stem.norm", width(0));
    }
    for (int l = 1; l <= cfg_.levels; ++l) {
      const std::string lv = std::to_string(l);
      down_.push_back(nn::add_conv(params_, "down" + lv, width(l - 1), width(l), 2, rng, nn::Init::kHe));
      if (cfg_.kind == BackboneKind::kConvUnet) {
        enc_.push_back(add_block("enc" + lv, width(l), width(l), rng));
      } else {
        if (width(l) % cfg_.heads != 0) throw ConfigError("attention width not divisible by heads");
        swin_.push_back(nn::add_swin_block(params_, "swin" + lv + "a", width(l), rng));
        swin_.push_back(nn::add_swin_block(params_, "swin" + lv + "b", width(l), rng));
      }
    }
    dec_.resize(cfg_.levels);
    for (int l = cfg_.levels - 1; l >= 0; --l)
      dec_[l] = add_block("dec" + std::to_string(l), width(l + 1) + width(l), width(l), rng);
    int c = width(0) + cfg_.in_channels;
    const int hw = cfg_.head_width > 0 ? cfg_.head_width : cfg_.base;
    for (int i = 0; i < cfg_.head_layers; ++i) {
      head_hidden_.push_back(nn::add_conv(params_, "head.hidden" + std::to_string(i), c, hw, 1, rng, nn::Init::kHe));
      c = hw;
    }
    head_out_.w = params_.add("head.out.w", {1, c, 1, 1}, nn::Init::kFanIn, c, rng);
    // Scaled down so the head starts near its bias on every pixel. At full
    // scale over half the pixels start negative, and on sparse fluence
    // targets MSE then switches the rest off within a few dozen steps.
    for (auto& v : params_[head_out_.w].value) v *= 0.01f;
    // Small positive bias keeps the ReLU head alive at initialization.
    head_out_.b = params_.add("head.out.b", {1}, nn::Init::kConstant, 1, rng, 0.01f);
  }

  nn::Tape::Id normalize(nn::Tape& t, nn::Tape::Id x, const nn::NormParams& p) const {
    switch (cfg_.norm) {
      case NormKind::kGroup: return nn::group_norm(t, x, p);
      case NormKind::kPixel: return nn::channel_norm(t, x, p.g, p.b);
      default: return x;
    }
  }

  nn::Tape::Id block(nn::Tape& t, nn::Tape::Id x, const BlockP& p) const {
    x = nn::relu(t, normalize(t, nn::conv(t, x, p.c1), p.n1));
    return nn::relu(t, normalize(t, nn::conv(t, x, p.c2), p.n2));
  }

  BackboneConfig cfg_;
  nn::ParamStore params_;
  std::vector<BlockP> enc_, dec_;
  nn::ConvParams stem_;
  nn::NormParams stem_norm_;
  std::vector<nn::ConvParams> down_;
  std::vector<nn::SwinBlockParams> swin_;
  std::vector<nn::ConvParams> head_hidden_;
  nn::ConvParams head_out_;
};

}  // namespace fluencelab
