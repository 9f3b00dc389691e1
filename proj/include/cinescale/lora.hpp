#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cinescale/linalg.hpp"
#include "cinescale/rng.hpp"

namespace cinescale {

/// Low-rank update W + scale * up * down for one linear layer.
struct LoraAdapter {
  std::string target;
  Mat down;  // A: rank x d_in
  Mat up;    // B: d_out x rank
  double scale = 1.0;

  std::size_t rank() const { return down.rows; }
  std::size_t in_dim() const { return down.cols; }
  std::size_t out_dim() const { return up.rows; }

  bool operator==(const LoraAdapter&) const = default;
};

/// A drawn uniformly in +-1/sqrt(d_in), B zero, so the adapter starts as a no-op.
inline LoraAdapter make_lora_adapter(std::string target, std::size_t d_in, std::size_t d_out, std::size_t rank,
                                     double scale, std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("LoRA rank must be >= 1");
  LoraAdapter a;
  a.target = std::move(target);
  a.down = Mat(rank, d_in);
  a.up = Mat(d_out, rank);
  a.scale = scale;
  CounterRng rng = CounterRng(seed).derive(a.target);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (double& v : a.down.data) v = rng.uniform(-bound, bound);
  return a;
}

/// W + scale * B * A.
inline Mat lora_apply(const Mat& w, const LoraAdapter& a) {
  if (a.up.cols != a.down.rows) throw std::invalid_argument("lora_apply: adapter rank mismatch");
  if (w.rows != a.up.rows || w.cols != a.down.cols)
    throw std::invalid_argument("lora_apply: weight is " + w.shape_string() + ", adapter maps " +
                                std::to_string(a.in_dim()) + " -> " + std::to_string(a.out_dim()));
  Mat out = w;
  for (std::size_t i = 0; i < w.rows; ++i)
    for (std::size_t j = 0; j < w.cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < a.rank(); ++r) s += a.up(i, r) * a.down(r, j);
      out(i, j) = w(i, j) + a.scale * s;
    }
  return out;
}

/// Gradients of the adapter factors given dL/dW_effective.
struct LoraGrad {
  Mat down;
  Mat up;
};

inline LoraGrad lora_grad(const LoraAdapter& a, const Mat& d_weight) {
  if (d_weight.rows != a.out_dim() || d_weight.cols != a.in_dim())
    throw std::invalid_argument("lora_grad: gradient shape mismatch");
  LoraGrad g{Mat(a.rank(), a.in_dim()), Mat(a.out_dim(), a.rank())};
  // dB = scale * dW * A^T ; dA = scale * B^T * dW
  for (std::size_t i = 0; i < a.out_dim(); ++i)
    for (std::size_t r = 0; r < a.rank(); ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.in_dim(); ++j) s += d_weight(i, j) * a.down(r, j);
      g.up(i, r) = a.scale * s;
    }
  for (std::size_t r = 0; r < a.rank(); ++r)
    for (std::size_t j = 0; j < a.in_dim(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.out_dim(); ++i) s += a.up(i, r) * d_weight(i, j);
      g.down(r, j) = a.scale * s;
    }
  return g;
}

struct LoraSet {
  std::vector<LoraAdapter> adapters;

  const LoraAdapter* find(std::string_view target) const {
    for (const auto& a : adapters)
      if (a.target == target) return &a;
    return nullptr;
  }
  bool empty() const { return adapters.empty(); }
  bool operator==(const LoraSet&) const = default;
};

}  // namespace cinescale
