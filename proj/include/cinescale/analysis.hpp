#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "cinescale/tensor.hpp"
#include "cinescale/tensor_ops.hpp"

namespace cinescale {

/// Single-channel image, row-major.
struct Image2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  bool empty() const { return data.empty(); }
};

/// Channel average of one frame.
inline Image2D channel_mean(const LatentTensor& x, std::size_t frame = 0) {
  if (frame >= x.frames()) throw std::invalid_argument("channel_mean: frame out of range");
  Image2D out(x.height(), x.width());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto p = x.plane(c * x.frames() + frame);
    for (std::size_t i = 0; i < p.size(); ++i) out.data[i] += p[i];
  }
  for (double& v : out.data) v /= static_cast<double>(x.channels());
  return out;
}

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Forward (sign -1) or inverse (+1, unnormalized) 2-D complex DFT.
inline std::vector<std::complex<double>> dft2(const std::vector<std::complex<double>>& in, std::size_t h,
                                              std::size_t w, int sign) {
  std::vector<std::complex<double>> out(in.size());
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), src, dst, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// |DFT(x)|^2 (unnormalized).
inline std::vector<double> power_spectrum(const Image2D& x) {
  std::vector<std::complex<double>> in(x.data.begin(), x.data.end());
  const auto f = dft2(in, x.height, x.width, FFTW_FORWARD);
  std::vector<double> p(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) p[i] = std::norm(f[i]);
  return p;
}
}  // namespace detail

struct SpectrumProfile {
  std::vector<double> bins;   // mean of |F|^2 / N^2 per radial band; bin 0 = DC only
  double total_power = 0.0;   // sum of unnormalized |F|^2 over all frequencies
};

/// Radial band of frequency (ky, kx): 0 for DC, otherwise
/// 1 + floor(r / r_max * (B - 1)) with r the normalized radius and
/// r_max = sqrt(0.5), clamped to B - 1.
inline std::size_t spectrum_bin(std::size_t ky, std::size_t kx, std::size_t h, std::size_t w, std::size_t bins) {
  if (ky == 0 && kx == 0) return 0;
  const double fy = static_cast<double>(std::min(ky, h - ky)) / static_cast<double>(h);
  const double fx = static_cast<double>(std::min(kx, w - kx)) / static_cast<double>(w);
  const double r = std::sqrt(fy * fy + fx * fx) / std::sqrt(0.5);
  const auto b = 1 + static_cast<std::size_t>(std::floor(r * static_cast<double>(bins - 1)));
  return std::min(b, bins - 1);
}

inline SpectrumProfile spectrum_profile(const Image2D& x, std::size_t bins = 32) {
  if (x.empty()) throw std::invalid_argument("spectrum_profile: empty image");
  if (bins < 2) throw std::invalid_argument("spectrum_profile: need at least 2 bins");
  const auto p = detail::power_spectrum(x);
  const double n2 = static_cast<double>(x.data.size()) * static_cast<double>(x.data.size());
  SpectrumProfile out;
  out.bins.assign(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t ky = 0; ky < x.height; ++ky)
    for (std::size_t kx = 0; kx < x.width; ++kx) {
      const double v = p[ky * x.width + kx];
      out.total_power += v;
      const std::size_t b = spectrum_bin(ky, kx, x.height, x.width, bins);
      out.bins[b] += v / n2;
      ++count[b];
    }
  for (std::size_t b = 0; b < bins; ++b)
    if (count[b]) out.bins[b] /= static_cast<double>(count[b]);
  return out;
}

/// ||x - G(x)||^2 / ||x - mean(x)||^2, 0 when the image is constant.
inline double hf_energy_ratio(const Image2D& x, double cutoff_sigma) {
  if (x.empty()) throw std::invalid_argument("hf_energy_ratio: empty image");
  LatentTensor t(1, x.height, x.width);
  std::copy(x.data.begin(), x.data.end(), t.data().begin());
  const LatentTensor low = gaussian_lowpass(t, FrequencyFilter(cutoff_sigma));
  double mu = 0.0;
  for (double v : x.data) mu += v;
  mu /= static_cast<double>(x.data.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double hi = x.data[i] - low.data()[i];
    num += hi * hi;
    den += (x.data[i] - mu) * (x.data[i] - mu);
  }
  if (den <= 1e-300 * static_cast<double>(x.data.size())) return 0.0;
  return std::clamp(num / den, 0.0, 1.0);
}

/// Maximum circular autocorrelation of the mean-removed image, normalized by
/// the zero-lag value, over lags (dy, dx) in (-H/2, H/2] x (-W/2, W/2] with
/// max(|dy|, |dx|) >= min_lag; clamped to [0, 1] and 0 for constant input.
inline double repetition_score(const Image2D& x, std::size_t min_lag) {
  if (min_lag < 1) throw std::invalid_argument("repetition_score: min_lag must be >= 1");
  if (x.height < 2 * min_lag || x.width < 2 * min_lag)
    throw std::invalid_argument("repetition_score: image " + std::to_string(x.height) + "x" +
                                std::to_string(x.width) + " smaller than 2 * min_lag = " + std::to_string(2 * min_lag));
  double mu = 0.0;
  for (double v : x.data) mu += v;
  mu /= static_cast<double>(x.data.size());
  Image2D c(x.height, x.width);
  double var = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    c.data[i] = x.data[i] - mu;
    var += c.data[i] * c.data[i];
  }
  if (var <= 1e-300 * static_cast<double>(x.data.size())) return 0.0;
  const auto p = detail::power_spectrum(c);
  std::vector<std::complex<double>> pc(p.begin(), p.end());
  const auto r = detail::dft2(pc, x.height, x.width, FFTW_BACKWARD);
  const double r0 = r[0].real();
  if (!(r0 > 0.0)) return 0.0;
  double best = 0.0;
  const auto signed_lag = [](std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
  };
  for (std::size_t ky = 0; ky < x.height; ++ky)
    for (std::size_t kx = 0; kx < x.width; ++kx) {
      const long dy = signed_lag(ky, x.height), dx = signed_lag(kx, x.width);
      if (static_cast<std::size_t>(std::max(std::abs(dy), std::abs(dx))) < min_lag) continue;
      best = std::max(best, r[ky * x.width + kx].real() / r0);
    }
  return std::clamp(best, 0.0, 1.0);
}

/// Sample Pearson correlation of two equally sized sequences (0 if either is constant).
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace cinescale
