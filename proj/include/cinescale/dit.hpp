#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cinescale/conditioning.hpp"
#include "cinescale/denoiser.hpp"
#include "cinescale/linalg.hpp"
#include "cinescale/lora.hpp"
#include "cinescale/parallel.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/rope.hpp"
#include "cinescale/unet.hpp"

namespace cinescale {

struct DitConfig {
  std::size_t latent_channels = 12;
  std::size_t patch = 2;
  std::size_t hidden = 64;  // >= patch_dim so the residual path can carry z_t through
  std::size_t heads = 2;
  std::array<std::size_t, 3> axis_dims{8, 12, 12};
  std::size_t mlp = 128;
  std::size_t blocks = 2;
  std::size_t cond_dim = 16;
  std::size_t time_dim = 16;
  std::size_t max_tokens = 4096;
  double rope_base = 10000.0;
  /// Tokens per (frame, height, width) axis at the training resolution.
  std::array<std::size_t, 3> train_extent{1, 8, 8};

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t patch_dim() const { return latent_channels * patch * patch; }

  void validate() const {
    if (heads == 0 || hidden % heads != 0) throw std::invalid_argument("DitConfig: hidden not divisible by heads");
    if (patch == 0) throw std::invalid_argument("DitConfig: patch must be >= 1");
    if (blocks == 0) throw std::invalid_argument("DitConfig: need at least one block");
    default_rope().validate(head_dim());
  }

  RopeConfig default_rope() const {
    RopeConfig r;
    r.base = rope_base;
    r.axis_dims = axis_dims;
    r.train_extent = train_extent;
    r.target_extent = train_extent;
    return r;
  }
};

/// y = x W^T + b.
struct Linear {
  Mat w;  // out x in
  Mat b;  // 1 x out

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : w(out, in), b(1, out) {}

  Mat forward(const Mat& x) const {
    Mat y = matmul_nt(x, w);
    for (std::size_t i = 0; i < y.rows; ++i)
      for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += b(0, j);
    return y;
  }

  /// Accumulates dW, db into g and returns dx.
  Mat backward(const Mat& x, const Mat& dy, Linear& g) const {
    add_inplace(g.w, matmul_tn(dy, x));
    for (std::size_t i = 0; i < dy.rows; ++i)
      for (std::size_t j = 0; j < dy.cols; ++j) g.b(0, j) += dy(i, j);
    return matmul_nn(dy, w);
  }

  bool operator==(const Linear&) const = default;
};

struct DitBlockWeights {
  Linear q, k, v, o;
  Linear xq, xk, xv, xo;
  Linear fc1, fc2;
};

struct DitWeights {
  DitConfig config;
  Linear patch_in, time1, time2, out;
  std::vector<DitBlockWeights> blocks;
  PromptTable prompts;

  /// Every linear layer by stable name ("patch_in", "blocks.0.q", ...).
  template <class F>
  void for_each_linear(F&& f) {
    f(std::string("patch_in"), patch_in);
    f(std::string("time1"), time1);
    f(std::string("time2"), time2);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      f(p + "q", b.q);
      f(p + "k", b.k);
      f(p + "v", b.v);
      f(p + "o", b.o);
      f(p + "xq", b.xq);
      f(p + "xk", b.xk);
      f(p + "xv", b.xv);
      f(p + "xo", b.xo);
      f(p + "fc1", b.fc1);
      f(p + "fc2", b.fc2);
    }
    f(std::string("out"), out);
  }

  Linear* find_linear(std::string_view name) {
    Linear* found = nullptr;
    for_each_linear([&](const std::string& n, Linear& l) {
      if (n == name) found = &l;
    });
    return found;
  }

  void visit(const ParamVisitor& f) {
    for_each_linear([&](const std::string& n, Linear& l) {
      visit_mat(f, n + ".weight", l.w);
      visit_mat(f, n + ".bias", l.b);
    });
    visit_mat(f, "prompt_table", prompts.table);
  }

  static DitWeights zeros(const DitConfig& cfg) {
    cfg.validate();
    DitWeights w;
    w.config = cfg;
    const std::size_t D = cfg.hidden;
    w.patch_in = Linear(cfg.patch_dim(), D);
    w.time1 = Linear(cfg.time_dim, D);
    w.time2 = Linear(D, D);
    w.out = Linear(D, cfg.patch_dim());
    w.blocks.resize(cfg.blocks);
    for (auto& b : w.blocks) {
      b.q = b.k = b.v = b.o = Linear(D, D);
      b.xq = b.xo = Linear(D, D);
      b.xk = b.xv = Linear(cfg.cond_dim, D);
      b.fc1 = Linear(D, cfg.mlp);
      b.fc2 = Linear(cfg.mlp, D);
    }
    w.prompts.table = Mat(PromptTable::kRows, cfg.cond_dim);
    return w;
  }

  /// Same shapes, every entry zero (used for gradient accumulation).
  DitWeights zeros_like() const {
    DitWeights g = zeros(config);
    return g;
  }

  /// Weights in +-1/sqrt(fan_in), biases zero, prompt table standard normal.
  static DitWeights seeded(const DitConfig& cfg, std::uint64_t seed) {
    DitWeights w = zeros(cfg);
    const CounterRng root(seed);
    w.visit([&](const std::string& name, const std::vector<std::size_t>& shape, std::vector<double>& data) {
      if (name.ends_with(".bias")) return;
      CounterRng rng = root.derive(name);
      if (name == "prompt_table") {
        for (double& v : data) v = rng.normal();
        return;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      for (double& v : data) v = rng.uniform(-bound, bound);
    });
    return w;
  }

  /// Copy with every adapter merged into its target linear weight.
  DitWeights merged(const LoraSet& adapters) const {
    DitWeights out = *this;
    for (const auto& a : adapters.adapters) {
      Linear* l = out.find_linear(a.target);
      if (!l) throw std::invalid_argument("LoRA target '" + a.target + "' is not a linear layer of the model");
      l->w = lora_apply(l->w, a);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Token layout

struct TokenGrid {
  std::size_t frames = 1, rows = 1, cols = 1;
  std::size_t count() const { return frames * rows * cols; }
};

inline TokenGrid token_grid(const LatentTensor& z, std::size_t patch) {
  if (z.height() % patch != 0 || z.width() % patch != 0)
    throw std::invalid_argument("patchify: spatial dims " + z.shape_string() + " not divisible by patch " +
                                std::to_string(patch));
  return {z.frames(), z.height() / patch, z.width() / patch};
}

/// Token n = (f, py, px) row-major; feature index c * p * p + dy * p + dx.
inline Mat patchify(const LatentTensor& z, std::size_t p) {
  const TokenGrid g = token_grid(z, p);
  const std::size_t C = z.channels();
  Mat out(g.count(), C * p * p);
  for (std::size_t f = 0; f < g.frames; ++f)
    for (std::size_t py = 0; py < g.rows; ++py)
      for (std::size_t px = 0; px < g.cols; ++px) {
        double* row = out.row((f * g.rows + py) * g.cols + px);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx) row[(c * p + dy) * p + dx] = z.at(c, f, py * p + dy, px * p + dx);
      }
  return out;
}

inline LatentTensor unpatchify(const Mat& tokens, const LatentTensor& shape, std::size_t p) {
  const TokenGrid g = token_grid(shape, p);
  LatentTensor out = LatentTensor::zeros_like(shape);
  const std::size_t C = shape.channels();
  if (tokens.rows != g.count() || tokens.cols != C * p * p) throw std::invalid_argument("unpatchify: shape mismatch");
  for (std::size_t f = 0; f < g.frames; ++f)
    for (std::size_t py = 0; py < g.rows; ++py)
      for (std::size_t px = 0; px < g.cols; ++px) {
        const double* row = tokens.row((f * g.rows + py) * g.cols + px);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx) out.at(c, f, py * p + dy, px * p + dx) = row[(c * p + dy) * p + dx];
      }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives with explicit backward passes

/// Row-wise layer norm without affine parameters (eps 1e-6); returns rstd per row.
inline Mat layer_norm(const Mat& x, std::vector<double>* rstd_out = nullptr) {
  Mat y(x.rows, x.cols);
  if (rstd_out) rstd_out->assign(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double mu = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mu += r[j];
    mu /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) var += (r[j] - mu) * (r[j] - mu);
    const double rstd = 1.0 / std::sqrt(var / static_cast<double>(x.cols) + 1e-6);
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = (r[j] - mu) * rstd;
    if (rstd_out) (*rstd_out)[i] = rstd;
  }
  return y;
}

inline Mat layer_norm_backward(const Mat& y, const std::vector<double>& rstd, const Mat& dy) {
  Mat dx(y.rows, y.cols);
  const double n = static_cast<double>(y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) {
      m1 += dy(i, j);
      m2 += dy(i, j) * y(i, j);
    }
    m1 /= n;
    m2 /= n;
    for (std::size_t j = 0; j < y.cols; ++j) dx(i, j) = rstd[i] * (dy(i, j) - m1 - y(i, j) * m2);
  }
  return dx;
}

inline double gelu(double x) {
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double k = std::sqrt(2.0 / std::numbers::pi);
  const double th = std::tanh(k * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Columns [h * hd, (h + 1) * hd) of every row.
inline Mat head_slice(const Mat& x, std::size_t h, std::size_t hd) {
  Mat out(x.rows, hd);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < hd; ++j) out(i, j) = x(i, h * hd + j);
  return out;
}

inline void head_store(Mat& x, const Mat& part, std::size_t h, std::size_t hd) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < hd; ++j) x(i, h * hd + j) = part(i, j);
}

/// Rotates every head of every row by the row's angles (sign -1 = inverse).
inline Mat rotate_heads(const Mat& x, const std::vector<std::vector<double>>& angles, std::size_t heads,
                        double sign = 1.0) {
  Mat out = x;
  const std::size_t hd = x.cols / heads;
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<double> a = angles[i];
    if (sign < 0)
      for (double& v : a) v = -v;
    for (std::size_t h = 0; h < heads; ++h) apply_rope_inplace(std::span<double>(out.row(i) + h * hd, hd), a);
  }
  return out;
}

/// Multi-head attention: row i of head h attends to keys[sel(i)] with
/// logits scaled by 1 / (temperature * sqrt(hd)). If `probs` is given it
/// receives the per-head probability matrices (rows x keys-of-row-set).
inline Mat multihead_attention(const Mat& q, const std::vector<Mat>& keys, const std::vector<Mat>& values,
                               std::size_t heads, double temperature, const std::vector<std::size_t>& selector,
                               std::vector<Mat>* probs) {
  const std::size_t hd = q.cols / heads;
  std::size_t max_keys = 0;
  for (const auto& k : keys) max_keys = std::max(max_keys, k.rows);
  Mat out(q.rows, q.cols);
  if (probs) probs->assign(heads, Mat(q.rows, max_keys));
  const double scale = 1.0 / (temperature * std::sqrt(static_cast<double>(hd)));
  parallel_for(q.rows, [&](std::size_t i) {
    const std::size_t s = selector.empty() ? 0 : selector[i];
    if (s >= keys.size()) throw std::invalid_argument("attention: selector out of range");
    const Mat& k = keys[s];
    const Mat& v = values[s];
    std::vector<double> p(k.rows);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qi = q.row(i) + h * hd;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < k.rows; ++j) {
        const double* kj = k.row(j) + h * hd;
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += qi[c] * kj[c];
        p[j] = acc * scale;
        mx = std::max(mx, p[j]);
      }
      double sum = 0.0;
      for (double& x : p) {
        x = std::exp(x - mx);
        sum += x;
      }
      for (double& x : p) x /= sum;
      double* o = out.row(i) + h * hd;
      for (std::size_t j = 0; j < k.rows; ++j) {
        const double* vj = v.row(j) + h * hd;
        for (std::size_t c = 0; c < hd; ++c) o[c] += p[j] * vj[c];
      }
      if (probs)
        for (std::size_t j = 0; j < k.rows; ++j) (*probs)[h](i, j) = p[j];
    }
  });
  return out;
}

/// Backward of multihead_attention w.r.t. q, every key set and value set.
inline void multihead_attention_backward(const Mat& q, const std::vector<Mat>& keys, const std::vector<Mat>& values,
                                         std::size_t heads, double temperature,
                                         const std::vector<std::size_t>& selector, const std::vector<Mat>& probs,
                                         const Mat& d_out, Mat& dq, std::vector<Mat>& dkeys,
                                         std::vector<Mat>& dvalues) {
  const std::size_t hd = q.cols / heads;
  const double scale = 1.0 / (temperature * std::sqrt(static_cast<double>(hd)));
  dq = Mat(q.rows, q.cols);
  dkeys.clear();
  dvalues.clear();
  for (std::size_t s = 0; s < keys.size(); ++s) {
    dkeys.emplace_back(keys[s].rows, keys[s].cols);
    dvalues.emplace_back(values[s].rows, values[s].cols);
  }
  std::vector<double> ds;
  for (std::size_t i = 0; i < q.rows; ++i) {
    const std::size_t s = selector.empty() ? 0 : selector[i];
    const Mat& k = keys[s];
    const Mat& v = values[s];
    ds.assign(k.rows, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const Mat& P = probs[h];
      const double* go = d_out.row(i) + h * hd;
      double dot = 0.0;
      for (std::size_t j = 0; j < k.rows; ++j) {
        const double* vj = v.row(j) + h * hd;
        double dp = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dp += go[c] * vj[c];
        ds[j] = dp;
        dot += dp * P(i, j);
        double* dvj = dvalues[s].row(j) + h * hd;
        for (std::size_t c = 0; c < hd; ++c) dvj[c] += P(i, j) * go[c];
      }
      const double* qi = q.row(i) + h * hd;
      double* dqi = dq.row(i) + h * hd;
      for (std::size_t j = 0; j < k.rows; ++j) {
        const double g = P(i, j) * (ds[j] - dot) * scale;
        const double* kj = k.row(j) + h * hd;
        double* dkj = dkeys[s].row(j) + h * hd;
        for (std::size_t c = 0; c < hd; ++c) {
          dqi[c] += g * kj[c];
          dkj[c] += g * qi[c];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

struct DitBlockTape {
  Mat in, a, qr, kr, v, att, h1, c, xq, xatt, h2, m, f1, g;
  std::vector<double> rstd1, rstd2, rstd3;
  std::vector<Mat> xk, xv, p_self, p_cross;
};

struct DitTape {
  Mat x0;
  std::vector<double> temb, a1, s1;
  std::vector<DitBlockTape> blocks;
  Mat hf, y;
  std::vector<double> rstdf;
  std::vector<std::vector<double>> angles;
  std::vector<std::size_t> selector;
  std::vector<Mat> cond_sets;
  double temperature = 1.0;
  std::size_t heads = 1;
};

inline RopeConfig resolve_rope(const DitConfig& cfg, const DitAdaptation& ad) {
  RopeConfig r = ad.rope ? *ad.rope : cfg.default_rope();
  r.validate(cfg.head_dim());
  return r;
}

/// One forward pass; fills `tape` when given (training).
inline LatentTensor dit_forward(const DitWeights& w, const LatentTensor& z, double t, const Conditioning& cond,
                                const DitAdaptation& ad, DitTape* tape = nullptr) {
  const DitConfig& cfg = w.config;
  if (z.channels() != cfg.latent_channels)
    throw std::invalid_argument("dit_predict: expected " + std::to_string(cfg.latent_channels) + " channels, got " +
                                z.shape_string());
  if (!(ad.temperature > 0.0)) throw std::invalid_argument("dit_predict: temperature must be > 0");
  const RopeConfig rope = resolve_rope(cfg, ad);
  const TokenGrid grid = token_grid(z, cfg.patch);
  const std::size_t N = grid.count();
  if (N > cfg.max_tokens)
    throw std::invalid_argument("dit_predict: " + std::to_string(N) + " tokens exceed the maximum of " +
                                std::to_string(cfg.max_tokens));
  if (cond.sets.empty()) throw std::invalid_argument("dit_predict: conditioning needs at least one token set");

  std::vector<std::vector<double>> angles(N);
  for (std::size_t f = 0; f < grid.frames; ++f)
    for (std::size_t y = 0; y < grid.rows; ++y)
      for (std::size_t x = 0; x < grid.cols; ++x)
        angles[(f * grid.rows + y) * grid.cols + x] =
            rope.angles(f + ad.position_offset[0], y + ad.position_offset[1], x + ad.position_offset[2]);

  std::vector<std::size_t> selector;
  if (!cond.selector.empty()) {
    const auto cells = cond.selector.resample(grid.rows, grid.cols);
    selector.resize(N);
    for (std::size_t n = 0; n < N; ++n) selector[n] = cells[n % (grid.rows * grid.cols)];
  }

  const Mat x0 = patchify(z, cfg.patch);
  Mat h = w.patch_in.forward(x0);
  const auto temb = timestep_embedding(t, cfg.time_dim);
  Mat e(1, temb.size());
  e.data = temb;
  const Mat a1 = w.time1.forward(e);
  Mat s1 = a1;
  for (double& v : s1.data) v = silu(v);
  const Mat tv = w.time2.forward(s1);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < cfg.hidden; ++j) h(i, j) += tv(0, j);

  if (tape) {
    tape->x0 = x0;
    tape->temb = temb;
    tape->a1 = a1.data;
    tape->s1 = s1.data;
    tape->angles = angles;
    tape->selector = selector;
    tape->cond_sets = cond.sets;
    tape->temperature = ad.temperature;
    tape->heads = cfg.heads;
    tape->blocks.assign(w.blocks.size(), {});
  }

  for (std::size_t bi = 0; bi < w.blocks.size(); ++bi) {
    const auto& b = w.blocks[bi];
    DitBlockTape local;
    DitBlockTape& bt = tape ? tape->blocks[bi] : local;
    const bool keep = tape != nullptr;

    std::vector<double> rstd1;
    const Mat a = layer_norm(h, &rstd1);
    const Mat qr = rotate_heads(b.q.forward(a), angles, cfg.heads);
    const Mat kr = rotate_heads(b.k.forward(a), angles, cfg.heads);
    const Mat v = b.v.forward(a);
    std::vector<Mat> p_self;
    const Mat att = multihead_attention(qr, {kr}, {v}, cfg.heads, ad.temperature, {}, keep ? &p_self : nullptr);
    Mat h1 = b.o.forward(att);
    add_inplace(h1, h);

    std::vector<double> rstd2;
    const Mat c = layer_norm(h1, &rstd2);
    const Mat xq = b.xq.forward(c);
    std::vector<Mat> xk, xv;
    for (const Mat& s : cond.sets) {
      if (s.cols != cfg.cond_dim) throw std::invalid_argument("dit_predict: condition token width mismatch");
      xk.push_back(b.xk.forward(s));
      xv.push_back(b.xv.forward(s));
    }
    std::vector<Mat> p_cross;
    const Mat xatt = multihead_attention(xq, xk, xv, cfg.heads, 1.0, selector, keep ? &p_cross : nullptr);
    Mat h2 = b.xo.forward(xatt);
    add_inplace(h2, h1);

    std::vector<double> rstd3;
    const Mat m = layer_norm(h2, &rstd3);
    const Mat f1 = b.fc1.forward(m);
    Mat g = f1;
    for (double& x : g.data) x = gelu(x);
    Mat h3 = b.fc2.forward(g);
    add_inplace(h3, h2);

    if (keep) {
      bt.in = h;
      bt.a = a;
      bt.rstd1 = std::move(rstd1);
      bt.qr = qr;
      bt.kr = kr;
      bt.v = v;
      bt.p_self = std::move(p_self);
      bt.att = att;
      bt.h1 = h1;
      bt.c = c;
      bt.rstd2 = std::move(rstd2);
      bt.xq = xq;
      bt.xk = std::move(xk);
      bt.xv = std::move(xv);
      bt.p_cross = std::move(p_cross);
      bt.xatt = xatt;
      bt.h2 = h2;
      bt.m = m;
      bt.rstd3 = std::move(rstd3);
      bt.f1 = f1;
      bt.g = g;
    }
    h = std::move(h3);
  }

  std::vector<double> rstdf;
  const Mat y = layer_norm(h, &rstdf);
  const Mat out = w.out.forward(y);
  if (tape) {
    tape->hf = h;
    tape->y = y;
    tape->rstdf = std::move(rstdf);
  }
  LatentTensor eps = unpatchify(out, z, cfg.patch);
  eps.set_level(z.level());
  return eps;
}

/// Accumulates dL/dparam into `grads` given dL/d(output) of a taped forward.
inline void dit_backward(const DitWeights& w, const DitTape& tape, const LatentTensor& d_eps, DitWeights& grads) {
  const DitConfig& cfg = w.config;
  const Mat d_out = patchify(d_eps, cfg.patch);
  const Mat dy = matmul_nn(d_out, w.out.w);
  add_inplace(grads.out.w, matmul_tn(d_out, tape.y));
  for (std::size_t i = 0; i < d_out.rows; ++i)
    for (std::size_t j = 0; j < d_out.cols; ++j) grads.out.b(0, j) += d_out(i, j);
  Mat dh = layer_norm_backward(tape.y, tape.rstdf, dy);

  for (std::size_t bi = w.blocks.size(); bi-- > 0;) {
    const auto& b = w.blocks[bi];
    auto& g = grads.blocks[bi];
    const DitBlockTape& bt = tape.blocks[bi];

    // MLP residual
    Mat dg = b.fc2.backward(bt.g, dh, g.fc2);
    for (std::size_t i = 0; i < dg.data.size(); ++i) dg.data[i] *= gelu_grad(bt.f1.data[i]);
    const Mat dm = b.fc1.backward(bt.m, dg, g.fc1);
    Mat dh2 = layer_norm_backward(bt.m, bt.rstd3, dm);
    add_inplace(dh2, dh);

    // cross-attention residual
    const Mat dxatt = b.xo.backward(bt.xatt, dh2, g.xo);
    Mat dxq;
    std::vector<Mat> dxk, dxv;
    multihead_attention_backward(bt.xq, bt.xk, bt.xv, cfg.heads, 1.0, tape.selector, bt.p_cross, dxatt, dxq, dxk,
                                 dxv);
    for (std::size_t s = 0; s < tape.cond_sets.size(); ++s) {
      b.xk.backward(tape.cond_sets[s], dxk[s], g.xk);
      b.xv.backward(tape.cond_sets[s], dxv[s], g.xv);
    }
    const Mat dc = b.xq.backward(bt.c, dxq, g.xq);
    Mat dh1 = layer_norm_backward(bt.c, bt.rstd2, dc);
    add_inplace(dh1, dh2);

    // self-attention residual
    const Mat datt = b.o.backward(bt.att, dh1, g.o);
    Mat dqr;
    std::vector<Mat> dk, dv;
    multihead_attention_backward(bt.qr, {bt.kr}, {bt.v}, cfg.heads, tape.temperature, {}, bt.p_self, datt, dqr, dk,
                                 dv);
    const Mat dq = rotate_heads(dqr, tape.angles, cfg.heads, -1.0);
    const Mat dkk = rotate_heads(dk[0], tape.angles, cfg.heads, -1.0);
    Mat da = b.q.backward(bt.a, dq, g.q);
    add_inplace(da, b.k.backward(bt.a, dkk, g.k));
    add_inplace(da, b.v.backward(bt.a, dv[0], g.v));
    Mat din = layer_norm_backward(bt.a, bt.rstd1, da);
    add_inplace(din, dh1);
    dh = std::move(din);
  }

  // time embedding: the same vector was added to every token
  Mat dtv(1, cfg.hidden);
  for (std::size_t i = 0; i < dh.rows; ++i)
    for (std::size_t j = 0; j < dh.cols; ++j) dtv(0, j) += dh(i, j);
  Mat s1(1, tape.s1.size());
  s1.data = tape.s1;
  Mat ds1 = w.time2.backward(s1, dtv, grads.time2);
  for (std::size_t j = 0; j < ds1.cols; ++j) {
    const double a = tape.a1[j], sg = sigmoid(a);
    ds1(0, j) *= sg * (1.0 + a * (1.0 - sg));
  }
  Mat e(1, tape.temb.size());
  e.data = tape.temb;
  w.time1.backward(e, ds1, grads.time1);
  w.patch_in.backward(tape.x0, dh, grads.patch_in);
}

class TinyDit : public Denoiser {
 public:
  explicit TinyDit(DitWeights w) : w_(std::move(w)) {}
  static TinyDit seeded(const DitConfig& cfg, std::uint64_t seed) { return TinyDit(DitWeights::seeded(cfg, seed)); }

  const DitWeights& weights() const { return w_; }
  DitWeights& mutable_weights() { return w_; }
  const DitConfig& config() const { return w_.config; }

  std::size_t latent_channels() const override { return w_.config.latent_channels; }
  bool supports_video() const override { return true; }
  std::size_t cond_dim() const override { return w_.config.cond_dim; }
  Mat prompt_tokens(std::string_view prompt) const override { return w_.prompts.tokens(prompt); }
  std::string backbone() const override { return "dit"; }
  std::size_t patch_size() const override { return w_.config.patch; }
  std::optional<RopeConfig> base_rope() const override { return w_.config.default_rope(); }

  LatentTensor predict(const LatentTensor& z, double t, const Conditioning& cond,
                       const DenoiseHooks& hooks) const override {
    return dit_forward(w_, z, t, cond, hooks.dit);
  }

 private:
  DitWeights w_;
};

/// dit_predict with an explicit rotary configuration and temperature.
inline LatentTensor dit_predict(const TinyDit& model, const LatentTensor& z, double t, const Conditioning& cond,
                                const RopeConfig& rope, double temperature, const DenoiseHooks& hooks = {}) {
  DitAdaptation ad = hooks.dit;
  ad.rope = rope;
  ad.temperature = temperature;
  return dit_forward(model.weights(), z, t, cond, ad);
}

}  // namespace cinescale
