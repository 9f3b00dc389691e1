#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cinescale/rng.hpp"
#include "cinescale/tensor.hpp"

namespace cinescale {

enum class BetaKind { linear, scaled_linear };

/// Discrete variance schedule indexed by t = 1..T, with alpha_bar(0) := 1.
///
/// `model_time(t)` is the (possibly fractional) timestep the denoiser is
/// conditioned on at schedule step t; it equals t until the schedule is
/// warped by shift_timesteps.
class NoiseSchedule {
 public:
  /// Builds a schedule from a non-increasing alpha_bar sequence in (0, 1].
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar, double shift = 1.0) {
    if (alpha_bar.empty()) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
    NoiseSchedule s;
    s.alpha_bar_ = std::move(alpha_bar);
    const std::size_t T = s.alpha_bar_.size();
    s.beta_.resize(T);
    s.alpha_.resize(T);
    double prev = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
      const double ab = s.alpha_bar_[i];
      if (!(ab > 0.0 && ab <= 1.0)) throw std::invalid_argument("NoiseSchedule: alpha_bar outside (0, 1]");
      if (ab > prev) throw std::invalid_argument("NoiseSchedule: alpha_bar must be non-increasing");
      s.alpha_[i] = ab / prev;
      s.beta_[i] = 1.0 - s.alpha_[i];
      prev = ab;
    }
    s.model_time_.resize(T + 1);
    for (std::size_t t = 0; t <= T; ++t) s.model_time_[t] = static_cast<double>(t);
    s.shift_ = shift;
    return s;
  }

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  double shift() const { return shift_; }
  const std::vector<double>& beta() const { return beta_; }
  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }

  /// alpha_bar at integer step t in [0, T]; alpha_bar(0) = 1.
  double alpha_bar_at(int t) const {
    check_step(t, 0);
    return t == 0 ? 1.0 : alpha_bar_[t - 1];
  }

  /// Piecewise-linear alpha_bar at a fractional step in [0, T].
  double alpha_bar_continuous(double pos) const {
    const double T = steps();
    if (!(pos >= 0.0 && pos <= T)) throw std::invalid_argument("alpha_bar_continuous: position out of range");
    const auto i0 = std::min(static_cast<int>(std::floor(pos)), steps() - 1);
    const double frac = pos - i0;
    const double a0 = alpha_bar_at(i0), a1 = alpha_bar_at(i0 + 1);
    return a0 + frac * (a1 - a0);
  }

  double model_time(int t) const {
    check_step(t, 0);
    return model_time_[t];
  }

  double model_time_continuous(double pos) const {
    const auto i0 = std::min(static_cast<int>(std::floor(pos)), steps() - 1);
    const double frac = pos - i0;
    return model_time_[i0] + frac * (model_time_[i0 + 1] - model_time_[i0]);
  }

  void check_step(int t, int min_t) const {
    if (t < min_t || t > steps())
      throw std::invalid_argument("timestep " + std::to_string(t) + " outside [" + std::to_string(min_t) +
                                  ", " + std::to_string(steps()) + "]");
  }

  bool operator==(const NoiseSchedule&) const = default;

 private:
  friend NoiseSchedule shift_timesteps(const NoiseSchedule&, double);
  NoiseSchedule() = default;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> model_time_;
  double shift_ = 1.0;
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end, BetaKind kind) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> ab(T);
  double running = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    double beta;
    if (kind == BetaKind::linear) {
      beta = beta_start + (beta_end - beta_start) * frac;
    } else {
      const double s = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
      beta = s * s;
    }
    running *= 1.0 - beta;
    ab[i] = running;
  }
  return NoiseSchedule::from_alpha_bar(std::move(ab));
}

/// Resolution shift warp on the unit interval: u' = s u / (1 + (s - 1) u).
inline double shift_warp(double u, double shift) { return shift * u / (1.0 + (shift - 1.0) * u); }

/// Resamples alpha_bar at the warped positions so every step carries more
/// noise (u' >= u). shift = 1 returns the schedule unchanged.
inline NoiseSchedule shift_timesteps(const NoiseSchedule& s, double shift) {
  if (!(shift >= 1.0) || !std::isfinite(shift)) throw std::invalid_argument("shift_timesteps: shift must be >= 1");
  if (shift == 1.0) return s;
  const int T = s.steps();
  std::vector<double> ab(T);
  std::vector<double> mt(T + 1);
  mt[0] = s.model_time(0);
  for (int t = 1; t <= T; ++t) {
    const double pos = shift_warp(static_cast<double>(t) / T, shift) * T;
    const double p = std::min(pos, static_cast<double>(T));
    ab[t - 1] = s.alpha_bar_continuous(p);
    mt[t] = s.model_time_continuous(p);
  }
  NoiseSchedule out = NoiseSchedule::from_alpha_bar(std::move(ab), s.shift() * shift);
  out.model_time_ = std::move(mt);
  return out;
}

/// sqrt(ab) z0 + sqrt(1 - ab) eps with an explicit alpha_bar.
inline LatentTensor noise_with_alpha_bar(const LatentTensor& z0, double alpha_bar, const LatentTensor& eps) {
  require_same_shape(z0, eps, "forward_noise");
  return axpby(std::sqrt(alpha_bar), z0, std::sqrt(1.0 - alpha_bar), eps);
}

inline LatentTensor forward_noise(const LatentTensor& z0, int t, const LatentTensor& eps, const NoiseSchedule& s) {
  s.check_step(t, 1);
  return noise_with_alpha_bar(z0, s.alpha_bar_at(t), eps);
}

/// Re-noises an upsampled clean latent to step K with a seeded draw.
inline LatentTensor renoise_to(const LatentTensor& z0_up, int K, const NoiseSchedule& s, std::uint64_t seed) {
  s.check_step(K, 1);
  return forward_noise(z0_up, K, normal_like(z0_up, seed), s);
}

/// Deterministic DDIM update from step t to t_prev (< t) given predicted noise.
inline LatentTensor reverse_step_ddim(const LatentTensor& z_t, const LatentTensor& eps_pred, int t, int t_prev,
                                      const NoiseSchedule& s) {
  if (t <= t_prev) throw std::invalid_argument("reverse_step_ddim: need t > t_prev");
  s.check_step(t, 1);
  s.check_step(t_prev, 0);
  require_same_shape(z_t, eps_pred, "reverse_step_ddim");
  const double ab_t = s.alpha_bar_at(t);
  const double ab_prev = s.alpha_bar_at(t_prev);
  const double sq_t = std::sqrt(ab_t), sq1_t = std::sqrt(1.0 - ab_t);
  const double sq_p = std::sqrt(ab_prev), sq1_p = std::sqrt(1.0 - ab_prev);
  LatentTensor out = LatentTensor::zeros_like(z_t);
  auto o = out.data();
  auto z = z_t.data();
  auto e = eps_pred.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double z0 = (z[i] - sq1_t * e[i]) / sq_t;
    o[i] = sq_p * z0 + sq1_p * e[i];
  }
  return out;
}

/// Descending timesteps from `start` to 0 using `count` intervals
/// (duplicates from rounding are dropped).
inline std::vector<int> sampling_timesteps(int start, int count) {
  if (start < 1) throw std::invalid_argument("sampling_timesteps: start must be >= 1");
  if (count < 1) throw std::invalid_argument("sampling_timesteps: need at least one step");
  std::vector<int> ts;
  for (int i = count; i >= 0; --i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(start) * i / count));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Detail blend

/// Exponent map for the cosine decay factor: a scalar or an H x W map that
/// broadcasts over channels and frames.
struct DetailControl {
  double scalar = 1.0;
  std::vector<double> map;  // empty => scalar everywhere
  std::size_t height = 0;
  std::size_t width = 0;

  static DetailControl uniform(double alpha) {
    DetailControl d;
    d.scalar = alpha;
    d.validate();
    return d;
  }
  static DetailControl spatial(std::vector<double> values, std::size_t h, std::size_t w) {
    DetailControl d;
    d.map = std::move(values);
    d.height = h;
    d.width = w;
    d.validate();
    return d;
  }

  bool is_spatial() const { return !map.empty(); }
  double at(std::size_t y, std::size_t x) const { return map.empty() ? scalar : map[y * width + x]; }

  void validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (map.empty()) {
      if (!ok(scalar)) throw std::invalid_argument("DetailControl: alpha must be finite and > 0");
      return;
    }
    if (map.size() != height * width) throw std::invalid_argument("DetailControl: map size mismatch");
    for (double v : map)
      if (!ok(v)) throw std::invalid_argument("DetailControl: alpha must be finite and > 0");
  }

  bool operator==(const DetailControl&) const = default;
};

/// Cosine decay factor c = ((1 + cos((T - t) / T * pi)) / 2)^alpha.
inline double detail_factor(double t, double T, double alpha) {
  return std::pow((1.0 + std::cos((T - t) / T * std::numbers::pi)) / 2.0, alpha);
}

/// c * z_tilde + (1 - c) * z, with c evaluated per cell from the alpha map.
inline LatentTensor detail_blend(const LatentTensor& z_tilde, const LatentTensor& z, double t, double T,
                                 const DetailControl& dc) {
  require_same_shape(z_tilde, z, "detail_blend");
  dc.validate();
  if (dc.is_spatial() && (dc.height != z.height() || dc.width != z.width()))
    throw std::invalid_argument("detail_blend: alpha map is " + std::to_string(dc.height) + "x" +
                                std::to_string(dc.width) + " but latent is " + z.shape_string());
  const std::size_t hw = z.plane_size();
  std::vector<double> c(hw);
  if (dc.is_spatial()) {
    for (std::size_t i = 0; i < hw; ++i) c[i] = detail_factor(t, T, dc.map[i]);
  } else {
    std::fill(c.begin(), c.end(), detail_factor(t, T, dc.scalar));
  }
  LatentTensor out = LatentTensor::zeros_like(z);
  for (std::size_t p = 0; p < z.planes(); ++p) {
    auto a = z_tilde.plane(p);
    auto b = z.plane(p);
    auto o = out.plane(p);
    for (std::size_t i = 0; i < hw; ++i) o[i] = c[i] * a[i] + (1.0 - c[i]) * b[i];
  }
  return out;
}

}  // namespace cinescale
