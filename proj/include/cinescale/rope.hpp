#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cinescale {

/// Rotary angles theta_j = n / (lambda * base)^(2j / d), j = 0 .. d/2 - 1.
inline std::vector<double> rope_angles(double position, double base, double lambda, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("rope_angles: dimension must be even and > 0");
  if (!(base > 0.0) || !(lambda > 0.0)) throw std::invalid_argument("rope_angles: base and lambda must be > 0");
  std::vector<double> angles(dim / 2);
  const double b = lambda * base;
  for (std::size_t j = 0; j < dim / 2; ++j)
    angles[j] = position / std::pow(b, static_cast<double>(2 * j) / static_cast<double>(dim));
  return angles;
}

/// Rotates consecutive pairs (v[2j], v[2j+1]) by angles[j], in place.
inline void apply_rope_inplace(std::span<double> v, std::span<const double> angles) {
  if (v.size() % 2 != 0 || angles.size() * 2 != v.size())
    throw std::invalid_argument("apply_rope: need |angles| = d / 2 with d even");
  for (std::size_t j = 0; j < angles.size(); ++j) {
    const double c = std::cos(angles[j]), s = std::sin(angles[j]);
    const double a = v[2 * j], b = v[2 * j + 1];
    v[2 * j] = a * c - b * s;
    v[2 * j + 1] = a * s + b * c;
  }
}

inline std::vector<double> apply_rope(std::span<const double> v, std::span<const double> angles) {
  std::vector<double> out(v.begin(), v.end());
  apply_rope_inplace(out, angles);
  return out;
}

/// NTK base multiplier max(1, (target / train)^(d / (d - 2))).
inline double ntk_lambda(double train_len, double target_len, std::size_t dim) {
  if (dim <= 2) throw std::invalid_argument("ntk_lambda: dimension must be > 2");
  if (!(train_len >= 1.0) || !(target_len >= 1.0)) throw std::invalid_argument("ntk_lambda: lengths must be >= 1");
  const double d = static_cast<double>(dim);
  return std::max(1.0, std::pow(target_len / train_len, d / (d - 2.0)));
}

/// Softmax temperature max(1, sqrt(ln(target) / ln(train))) for token counts >= 2.
inline double attention_temperature(double train_tokens, double target_tokens) {
  if (!(train_tokens >= 2.0) || !(target_tokens >= 2.0))
    throw std::invalid_argument("attention_temperature: token counts must be >= 2");
  return std::max(1.0, std::sqrt(std::log(target_tokens) / std::log(train_tokens)));
}

/// Three-axis (frame, height, width) rotary layout for one attention head.
struct RopeConfig {
  double base = 10000.0;
  std::array<double, 3> lambda{1.0, 1.0, 1.0};
  std::array<std::size_t, 3> axis_dims{4, 6, 6};
  std::array<std::size_t, 3> train_extent{1, 1, 1};
  std::array<std::size_t, 3> target_extent{1, 1, 1};

  std::size_t head_dim() const { return axis_dims[0] + axis_dims[1] + axis_dims[2]; }

  void validate(std::size_t head_dim_expected) const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (axis_dims[a] % 2 != 0)
        throw std::invalid_argument("RopeConfig: axis " + std::to_string(a) + " dimension must be even");
      if (!(lambda[a] >= 1.0)) throw std::invalid_argument("RopeConfig: lambda must be >= 1");
    }
    if (head_dim() != head_dim_expected)
      throw std::invalid_argument("RopeConfig: axis dims sum to " + std::to_string(head_dim()) + ", head dim is " +
                                  std::to_string(head_dim_expected));
    if (!(base > 0.0)) throw std::invalid_argument("RopeConfig: base must be > 0");
  }

  /// Per-axis NTK factors from each axis's own extent ratio (1 when the
  /// target does not exceed training, or when an axis is too small for the
  /// exponent to be defined).
  RopeConfig with_ntk() const {
    RopeConfig out = *this;
    for (std::size_t a = 0; a < 3; ++a) {
      if (axis_dims[a] <= 2 || target_extent[a] <= train_extent[a]) {
        out.lambda[a] = 1.0;
        continue;
      }
      out.lambda[a] = ntk_lambda(static_cast<double>(train_extent[a]), static_cast<double>(target_extent[a]),
                                 axis_dims[a]);
    }
    return out;
  }

  /// Concatenated per-axis angles for a token at (f, y, x).
  std::vector<double> angles(double f, double y, double x) const {
    std::vector<double> out;
    out.reserve(head_dim() / 2);
    const double pos[3] = {f, y, x};
    for (std::size_t a = 0; a < 3; ++a) {
      if (axis_dims[a] == 0) continue;
      auto ang = rope_angles(pos[a], base, lambda[a], axis_dims[a]);
      out.insert(out.end(), ang.begin(), ang.end());
    }
    return out;
  }

  bool operator==(const RopeConfig&) const = default;
};

}  // namespace cinescale
