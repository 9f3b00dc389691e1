#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "cinescale/linalg.hpp"
#include "cinescale/parallel.hpp"
#include "cinescale/tensor.hpp"
#include "cinescale/tensor_ops.hpp"

namespace cinescale {

/// Query/key/value projections of one single-head self-attention layer.
/// wq, wk map C -> d'; wv maps C -> C so the output keeps the feature width.
struct AttentionWeights {
  Mat wq;
  Mat wk;
  Mat wv;

  std::size_t key_dim() const { return wq.rows; }
};

/// Image feature map [C, H, W] -> tokens [H*W, C].
inline Mat to_tokens(const LatentTensor& h) {
  if (h.temporal()) throw std::invalid_argument("to_tokens: expected an image feature map");
  const std::size_t n = h.plane_size();
  Mat out(n, h.channels());
  for (std::size_t c = 0; c < h.channels(); ++c) {
    auto p = h.plane(c);
    for (std::size_t i = 0; i < n; ++i) out(i, c) = p[i];
  }
  return out;
}

inline LatentTensor from_tokens(const Mat& tokens, const LatentTensor& shape) {
  LatentTensor out(tokens.cols, shape.height(), shape.width(), shape.level());
  if (tokens.rows != shape.plane_size()) throw std::invalid_argument("from_tokens: token count mismatch");
  for (std::size_t c = 0; c < tokens.cols; ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < tokens.rows; ++i) p[i] = tokens(i, c);
  }
  return out;
}

/// softmax(q_i . k_j / (temperature sqrt(d))) v_j for every query row.
/// `set_of_row`, when non-empty, routes query i to keys[set_of_row[i]].
inline Mat scaled_dot_attention(const Mat& q, std::span<const Mat> keys, std::span<const Mat> values,
                                double temperature, std::span<const std::size_t> set_of_row = {}) {
  if (keys.empty() || keys.size() != values.size()) throw std::invalid_argument("attention: key/value sets mismatch");
  const std::size_t d = q.cols;
  const std::size_t dv = values[0].cols;
  for (std::size_t s = 0; s < keys.size(); ++s) {
    if (keys[s].cols != d || keys[s].rows != values[s].rows || values[s].cols != dv)
      throw std::invalid_argument("attention: key/value shape mismatch");
  }
  if (!set_of_row.empty() && set_of_row.size() != q.rows)
    throw std::invalid_argument("attention: selector length mismatch");
  Mat out(q.rows, dv);
  parallel_for(q.rows, [&](std::size_t i) {
    const std::size_t set = set_of_row.empty() ? 0 : set_of_row[i];
    if (set >= keys.size()) throw std::invalid_argument("attention: selector out of range");
    const Mat& k = keys[set];
    const Mat& v = values[set];
    std::vector<double> scores(k.rows);
    const double* qi = q.row(i);
    for (std::size_t j = 0; j < k.rows; ++j) {
      const double* kj = k.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      scores[j] = s;
    }
    softmax_scaled_inplace(scores, temperature, static_cast<double>(d));
    double* o = out.row(i);
    for (std::size_t j = 0; j < k.rows; ++j) {
      const double p = scores[j];
      const double* vj = v.row(j);
      for (std::size_t c = 0; c < dv; ++c) o[c] += p * vj[c];
    }
  });
  return out;
}

/// Self-attention over token rows: softmax(Q K^T / sqrt(d')) V.
inline Mat self_attention_tokens(const Mat& x, const AttentionWeights& w, double temperature = 1.0) {
  if (w.wq.cols != x.cols || w.wk.cols != x.cols || w.wv.cols != x.cols || w.wq.rows != w.wk.rows)
    throw std::invalid_argument("self_attention: weight shape mismatch");
  const Mat q = matmul_nt(x, w.wq);
  const Mat k = matmul_nt(x, w.wk);
  const Mat v = matmul_nt(x, w.wv);
  return scaled_dot_attention(q, std::span(&k, 1), std::span(&v, 1), temperature);
}

/// Global self-attention over all H*W positions of a feature map.
inline LatentTensor attention_global(const LatentTensor& h_in, const AttentionWeights& w) {
  return from_tokens(self_attention_tokens(to_tokens(h_in), w), h_in);
}

/// Self-attention applied independently inside each crop of `grid`, then
/// stitched back with overlaps averaged.
inline LatentTensor attention_local(const LatentTensor& h_in, const PatchGrid& grid, const AttentionWeights& w) {
  auto patches = extract_patches(h_in, grid);
  std::vector<LatentTensor> outs(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) outs[i] = attention_global(patches[i], w);
  return reconstruct_patches(outs, grid, h_in);
}

/// High band of the global branch plus low band of the local branch:
/// h_global - G(h_global) + G(h_local), evaluated as h_global + (G(h_local) - G(h_global)).
inline LatentTensor scale_fuse(const LatentTensor& h_global, const LatentTensor& h_local, const FrequencyFilter& f) {
  require_same_shape(h_global, h_local, "scale_fuse");
  const LatentTensor low_g = gaussian_lowpass(h_global, f);
  const LatentTensor low_l = gaussian_lowpass(h_local, f);
  LatentTensor out = LatentTensor::zeros_like(h_global);
  auto o = out.data();
  auto g = h_global.data();
  auto a = low_l.data();
  auto b = low_g.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = g[i] + (a[i] - b[i]);
  return out;
}

}  // namespace cinescale
