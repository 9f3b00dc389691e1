#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cinescale/attention.hpp"
#include "cinescale/conditioning.hpp"
#include "cinescale/denoiser.hpp"
#include "cinescale/linalg.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/tensor_ops.hpp"

namespace cinescale {

inline constexpr std::array<std::string_view, 5> kUnetBlocks{"down.0", "down.1", "mid", "up.0", "up.1"};

inline std::size_t unet_block_index(std::string_view id) {
  for (std::size_t i = 0; i < kUnetBlocks.size(); ++i)
    if (kUnetBlocks[i] == id) return i;
  throw std::invalid_argument("unknown UNet block id '" + std::string(id) + "'");
}

struct UnetConfig {
  std::size_t latent_channels = 12;
  std::size_t width0 = 8;
  std::size_t width1 = 16;
  std::size_t groups = 2;
  std::size_t key_dim = 8;
  std::size_t cond_dim = 16;
  std::size_t time_dim = 16;

  /// (in, out) channels of each block in kUnetBlocks order.
  std::array<std::array<std::size_t, 2>, 5> block_channels() const {
    return {{{latent_channels, width0}, {width0, width1}, {width1, width1}, {2 * width1, width1}, {width1 + width0, width0}}};
  }
};

struct UnetBlockWeights {
  ConvKernel conv;
  Mat time_w;  // C x time_dim
  Mat time_b;  // 1 x C
  std::vector<double> gn_gamma;
  std::vector<double> gn_beta;
  AttentionWeights self_attn;
  Mat self_out;  // C x C
  Mat cross_q;   // key_dim x C
  Mat cross_k;   // key_dim x cond_dim
  Mat cross_v;   // C x cond_dim
  Mat cross_out; // C x C
};

/// Visitor signature shared by all models: (name, shape, storage).
using ParamVisitor = std::function<void(const std::string&, const std::vector<std::size_t>&, std::vector<double>&)>;

inline void visit_mat(const ParamVisitor& f, const std::string& name, Mat& m) { f(name, {m.rows, m.cols}, m.data); }

inline void visit_conv(const ParamVisitor& f, const std::string& name, ConvKernel& k) {
  f(name + ".weight", {k.out_channels, k.in_channels, k.size, k.size}, k.weights);
  f(name + ".bias", {k.out_channels}, k.bias);
}

struct UnetWeights {
  UnetConfig config;
  std::array<UnetBlockWeights, 5> blocks;
  ConvKernel out_conv;
  PromptTable prompts;

  void visit(const ParamVisitor& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = std::string(kUnetBlocks[i]) + ".";
      visit_conv(f, p + "conv", b.conv);
      visit_mat(f, p + "time_w", b.time_w);
      visit_mat(f, p + "time_b", b.time_b);
      f(p + "gn_gamma", {b.gn_gamma.size()}, b.gn_gamma);
      f(p + "gn_beta", {b.gn_beta.size()}, b.gn_beta);
      visit_mat(f, p + "attn.wq", b.self_attn.wq);
      visit_mat(f, p + "attn.wk", b.self_attn.wk);
      visit_mat(f, p + "attn.wv", b.self_attn.wv);
      visit_mat(f, p + "attn.out", b.self_out);
      visit_mat(f, p + "xattn.wq", b.cross_q);
      visit_mat(f, p + "xattn.wk", b.cross_k);
      visit_mat(f, p + "xattn.wv", b.cross_v);
      visit_mat(f, p + "xattn.out", b.cross_out);
    }
    visit_conv(f, "out_conv", out_conv);
    visit_mat(f, "prompt_table", prompts.table);
  }

  /// Shapes from the config, every entry zero (group-norm gain 1).
  static UnetWeights zeros(const UnetConfig& cfg) {
    if (cfg.width0 % cfg.groups != 0 || cfg.width1 % cfg.groups != 0)
      throw std::invalid_argument("UnetConfig: widths must be divisible by groups");
    UnetWeights w;
    w.config = cfg;
    const auto ch = cfg.block_channels();
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t cin = ch[i][0], c = ch[i][1];
      auto& b = w.blocks[i];
      b.conv = ConvKernel(c, cin, 3);
      b.time_w = Mat(c, cfg.time_dim);
      b.time_b = Mat(1, c);
      b.gn_gamma.assign(c, 1.0);
      b.gn_beta.assign(c, 0.0);
      b.self_attn = {Mat(cfg.key_dim, c), Mat(cfg.key_dim, c), Mat(c, c)};
      b.self_out = Mat(c, c);
      b.cross_q = Mat(cfg.key_dim, c);
      b.cross_k = Mat(cfg.key_dim, cfg.cond_dim);
      b.cross_v = Mat(c, cfg.cond_dim);
      b.cross_out = Mat(c, c);
    }
    w.out_conv = ConvKernel(cfg.latent_channels, cfg.width0, 3);
    w.prompts.table = Mat(PromptTable::kRows, cfg.cond_dim);
    return w;
  }

  /// Seeded scaled-uniform init: each tensor drawn in +-1/sqrt(fan_in) from
  /// a stream keyed by its name; biases and group-norm shifts stay zero.
  static UnetWeights seeded(const UnetConfig& cfg, std::uint64_t seed) {
    UnetWeights w = zeros(cfg);
    const CounterRng root(seed);
    w.visit([&](const std::string& name, const std::vector<std::size_t>& shape, std::vector<double>& data) {
      if (name.ends_with("bias") || name.ends_with("time_b") || name.ends_with("gn_beta") ||
          name.ends_with("gn_gamma"))
        return;
      CounterRng rng = root.derive(name);
      if (name == "prompt_table") {
        for (double& v : data) v = rng.normal();
        return;
      }
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : data) v = rng.uniform(-bound, bound);
    });
    return w;
  }
};

// ---------------------------------------------------------------------------
// Building blocks

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

/// Group normalization over (channels-in-group x H x W), eps 1e-5, then a
/// per-channel affine.
inline void group_norm_inplace(LatentTensor& h, std::size_t groups, const std::vector<double>& gamma,
                               const std::vector<double>& beta) {
  const std::size_t C = h.channels();
  if (C % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
  const std::size_t per = C / groups;
  const std::size_t n = per * h.plane_size();
  for (std::size_t g = 0; g < groups; ++g) {
    double s = 0.0;
    for (std::size_t c = g * per; c < (g + 1) * per; ++c)
      for (double v : h.plane(c)) s += v;
    const double mu = s / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = g * per; c < (g + 1) * per; ++c)
      for (double v : h.plane(c)) var += (v - mu) * (v - mu);
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(n) + 1e-5);
    for (std::size_t c = g * per; c < (g + 1) * per; ++c)
      for (double& v : h.plane(c)) v = gamma[c] * (v - mu) * inv + beta[c];
  }
}

/// out(c) = sum_k W(c, k) h(k), applied per spatial cell.
inline LatentTensor channel_mix(const LatentTensor& h, const Mat& w) {
  return from_tokens(matmul_nt(to_tokens(h), w), h);
}

inline LatentTensor concat_channels(const LatentTensor& a, const LatentTensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw std::invalid_argument("concat: spatial mismatch");
  LatentTensor out(a.channels() + b.channels(), a.height(), a.width(), a.level());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

inline LatentTensor upsample_nearest2(const LatentTensor& x) {
  LatentTensor out(x.channels(), 2 * x.height(), 2 * x.width(), x.level());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < out.height(); ++y)
      for (std::size_t xx = 0; xx < out.width(); ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
  return out;
}

/// Cross-attention of every cell to its selected token set.
inline LatentTensor cross_attention(const LatentTensor& h, const Mat& wq, const Mat& wk, const Mat& wv,
                                    const Conditioning& cond) {
  const Mat q = matmul_nt(to_tokens(h), wq);
  std::vector<Mat> keys, values;
  for (const Mat& s : cond.sets) {
    if (s.cols != wk.cols) throw std::invalid_argument("cross_attention: condition token width mismatch");
    keys.push_back(matmul_nt(s, wk));
    values.push_back(matmul_nt(s, wv));
  }
  const auto selector = cond.selector.resample(h.height(), h.width());
  return from_tokens(scaled_dot_attention(q, keys, values, 1.0, selector), h);
}

class TinyUnet : public Denoiser {
 public:
  explicit TinyUnet(UnetWeights w) : w_(std::move(w)) {}
  static TinyUnet seeded(const UnetConfig& cfg, std::uint64_t seed) { return TinyUnet(UnetWeights::seeded(cfg, seed)); }

  const UnetWeights& weights() const { return w_; }
  UnetWeights& mutable_weights() { return w_; }

  std::size_t latent_channels() const override { return w_.config.latent_channels; }
  std::size_t cond_dim() const override { return w_.config.cond_dim; }
  Mat prompt_tokens(std::string_view prompt) const override { return w_.prompts.tokens(prompt); }
  std::string backbone() const override { return "unet"; }

  LatentTensor predict(const LatentTensor& z, double t, const Conditioning& cond,
                       const DenoiseHooks& hooks) const override {
    if (z.temporal()) throw std::invalid_argument("unet_predict: frame axis not supported (got " + z.shape_string() + ")");
    if (z.channels() != latent_channels())
      throw std::invalid_argument("unet_predict: expected " + std::to_string(latent_channels()) + " channels, got " +
                                  z.shape_string());
    if (z.height() % 4 != 0 || z.width() % 4 != 0)
      throw std::invalid_argument("unet_predict: spatial dims must be divisible by 4");
    const UnetHooks identity;
    const UnetHooks& hk = hooks.unet ? *hooks.unet : identity;
    const auto temb = timestep_embedding(t, w_.config.time_dim);

    const LatentTensor h0 = block(0, z, temb, cond, hk);
    const LatentTensor h1 = block(1, downsample_area(h0, 2), temb, cond, hk);
    const LatentTensor m = block(2, downsample_area(h1, 2), temb, cond, hk);
    const LatentTensor u0 = block(3, concat_channels(upsample_nearest2(m), h1), temb, cond, hk);
    const LatentTensor u1 = block(4, concat_channels(upsample_nearest2(u0), h0), temb, cond, hk);
    LatentTensor out = conv2d_dilated(u1, w_.out_conv, hk.dilation("up.1"));
    out.set_level(z.level());
    return out;
  }

 private:
  LatentTensor block(std::size_t idx, const LatentTensor& x, const std::vector<double>& temb, const Conditioning& cond,
                     const UnetHooks& hooks) const {
    const auto& b = w_.blocks[idx];
    const std::string_view id = kUnetBlocks[idx];
    const int d = hooks.dilation(id);
    LatentTensor h = conv2d_dilated(x, b.conv, d);
    for (std::size_t c = 0; c < h.channels(); ++c) {
      double tb = b.time_b(0, c);
      for (std::size_t k = 0; k < temb.size(); ++k) tb += b.time_w(c, k) * temb[k];
      for (double& v : h.plane(c)) v += tb;
    }
    group_norm_inplace(h, w_.config.groups, b.gn_gamma, b.gn_beta);
    for (double& v : h.data()) v = silu(v);

    const AttentionMode mode = hooks.attention_mode(id);
    hooks.record(id, d, mode);
    LatentTensor a;
    switch (mode) {
      case AttentionMode::global: a = attention_global(h, b.self_attn); break;
      case AttentionMode::local: a = attention_local(h, hooks.local_grid(id, h.height(), h.width()), b.self_attn); break;
      case AttentionMode::fused:
        a = scale_fuse(attention_global(h, b.self_attn),
                       attention_local(h, hooks.local_grid(id, h.height(), h.width()), b.self_attn),
                       hooks.fusion_filter());
        break;
    }
    h = axpby(1.0, h, 1.0, channel_mix(a, b.self_out));
    if (!cond.sets.empty()) {
      const LatentTensor c = cross_attention(h, b.cross_q, b.cross_k, b.cross_v, cond);
      h = axpby(1.0, h, 1.0, channel_mix(c, b.cross_out));
    }
    return h;
  }

  UnetWeights w_;
};

}  // namespace cinescale
