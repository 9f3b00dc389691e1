#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cinescale/parallel.hpp"
#include "cinescale/tensor.hpp"

namespace cinescale {

// ---------------------------------------------------------------------------
// Resampling

/// Spatial bilinear upsampling by an integer factor.
///
/// Output cell i samples input coordinate (i + 0.5) / scale - 0.5, clamped to
/// the valid range (sample-center alignment). Frames and channels are left
/// alone; the level is multiplied by `scale`.
inline LatentTensor upsample_bilinear(const LatentTensor& x, int scale) {
  if (scale < 1) throw std::invalid_argument("upsample_bilinear: scale must be >= 1");
  if (scale == 1) return x;

  const std::size_t h = x.height(), w = x.width();
  const std::size_t oh = h * scale, ow = w * scale;
  LatentTensor out = x.resized(oh, ow, x.level() * scale);

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [scale](std::size_t n_out, std::size_t n_in) {
    std::vector<Tap> t(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      double src = (static_cast<double>(i) + 0.5) / scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      t[i] = {i0, std::min(i0 + 1, n_in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(oh, h);
  const auto tx = taps(ow, w);

  parallel_for(x.planes(), [&](std::size_t p) {
    auto src = x.plane(p);
    auto dst = out.plane(p);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Tap& a = ty[oy];
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Tap& b = tx[ox];
        const double v00 = src[a.i0 * w + b.i0], v01 = src[a.i0 * w + b.i1];
        const double v10 = src[a.i1 * w + b.i0], v11 = src[a.i1 * w + b.i1];
        const double top = v00 + b.frac * (v01 - v00);
        const double bot = v10 + b.frac * (v11 - v10);
        dst[oy * ow + ox] = top + a.frac * (bot - top);
      }
    }
  });
  return out;
}

/// Box-average downsampling by an integer factor (used to bring reference
/// frames and masks to coarser levels).
inline LatentTensor downsample_area(const LatentTensor& x, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample_area: factor must be >= 1");
  if (factor == 1) return x;
  if (x.height() % factor != 0 || x.width() % factor != 0)
    throw std::invalid_argument("downsample_area: extents not divisible by factor");
  const std::size_t oh = x.height() / factor, ow = x.width() / factor;
  LatentTensor out = x.resized(oh, ow, std::max(1, x.level() / factor));
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t p = 0; p < x.planes(); ++p) {
    auto src = x.plane(p);
    auto dst = out.plane(p);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += src[(oy * factor + dy) * x.width() + ox * factor + dx];
        dst[oy * ow + ox] = s * inv;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian low-pass

/// Normalized, symmetric 1-D Gaussian with radius ceil(3 sigma).
class FrequencyFilter {
 public:
  explicit FrequencyFilter(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("FrequencyFilter: sigma must be > 0");
    radius_ = static_cast<int>(std::ceil(3.0 * sigma));
    kernel_.resize(2 * radius_ + 1);
    double sum = 0.0;
    for (int i = -radius_; i <= radius_; ++i) {
      const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
      kernel_[i + radius_] = v;
      sum += v;
    }
    for (double& v : kernel_) v /= sum;
  }

  double sigma() const { return sigma_; }
  int radius() const { return radius_; }
  std::span<const double> kernel() const { return kernel_; }

 private:
  double sigma_;
  int radius_ = 0;
  std::vector<double> kernel_;
};

/// Mirror index without repeating the edge sample (…, 2, 1, 0, 1, 2, …).
inline std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

/// Separable Gaussian blur over H and W with reflect padding.
inline LatentTensor gaussian_lowpass(const LatentTensor& x, const FrequencyFilter& f) {
  const std::size_t h = x.height(), w = x.width();
  const int r = f.radius();
  const auto k = f.kernel();
  LatentTensor out = LatentTensor::zeros_like(x);

  parallel_for(x.planes(), [&](std::size_t p) {
    auto src = x.plane(p);
    auto dst = out.plane(p);
    std::vector<double> tmp(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int j = -r; j <= r; ++j)
          s += k[j + r] * src[y * w + reflect_index(static_cast<long>(xx) + j, w)];
        tmp[y * w + xx] = s;
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += k[i + r] * tmp[reflect_index(static_cast<long>(y) + i, h) * w + xx];
        dst[y * w + xx] = s;
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dilated convolution

/// Convolution weights laid out [C_out, C_in, k, k] with an optional bias.
struct ConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t size = 0;
  std::vector<double> weights;
  std::vector<double> bias;  // empty or out_channels entries

  ConvKernel() = default;
  ConvKernel(std::size_t cout, std::size_t cin, std::size_t k)
      : out_channels(cout), in_channels(cin), size(k), weights(cout * cin * k * k, 0.0),
        bias(cout, 0.0) {}

  double& at(std::size_t o, std::size_t c, std::size_t i, std::size_t j) {
    return weights[((o * in_channels + c) * size + i) * size + j];
  }
  double at(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const {
    return weights[((o * in_channels + c) * size + i) * size + j];
  }
};

/// Zero-padded "same" convolution with the kernel taps spread d cells apart.
///
/// out(o, y, x) = bias[o] + sum_{c,i,j} k(o, c, i, j) * x(c, y + d (i - r), x + d (j - r))
/// with r = k / 2. Frames are processed independently.
inline LatentTensor conv2d_dilated(const LatentTensor& x, const ConvKernel& kernel, int dilation) {
  if (kernel.size % 2 == 0) throw std::invalid_argument("conv2d_dilated: kernel size must be odd");
  if (dilation < 1) throw std::invalid_argument("conv2d_dilated: dilation must be >= 1");
  if (kernel.in_channels != x.channels())
    throw std::invalid_argument("conv2d_dilated: input channel mismatch");
  if (kernel.weights.size() != kernel.out_channels * kernel.in_channels * kernel.size * kernel.size)
    throw std::invalid_argument("conv2d_dilated: kernel storage size mismatch");

  const std::size_t h = x.height(), w = x.width(), frames = x.frames();
  const long r = static_cast<long>(kernel.size / 2);
  const long d = dilation;
  LatentTensor out = x.temporal()
                         ? LatentTensor::video(kernel.out_channels, frames, h, w, x.level())
                         : LatentTensor(kernel.out_channels, h, w, x.level());

  parallel_for(kernel.out_channels * frames, [&](std::size_t job) {
    const std::size_t o = job / frames, f = job % frames;
    auto dst = out.plane(o * frames + f);
    const double b = kernel.bias.empty() ? 0.0 : kernel.bias[o];
    for (double& v : dst) v = b;
    for (std::size_t c = 0; c < kernel.in_channels; ++c) {
      auto src = x.plane(c * frames + f);
      for (long i = 0; i < static_cast<long>(kernel.size); ++i)
        for (long j = 0; j < static_cast<long>(kernel.size); ++j) {
          const double kv = kernel.at(o, c, i, j);
          if (kv == 0.0) continue;
          const long oy = d * (i - r), ox = d * (j - r);
          for (long y = 0; y < static_cast<long>(h); ++y) {
            const long sy = y + oy;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            const long x0 = std::max(0L, -ox), x1 = std::min(static_cast<long>(w), static_cast<long>(w) - ox);
            for (long xx = x0; xx < x1; ++xx) dst[y * w + xx] += kv * src[sy * w + xx + ox];
          }
        }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Patch geometry

/// Sliding-window crop layout: window (h, w) moved by (stride_h, stride_w).
struct PatchGrid {
  std::size_t window_h = 1;
  std::size_t window_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;

  static PatchGrid whole(std::size_t h, std::size_t w) { return {h, w, h, w}; }

  /// Throws invalid_argument naming the failing axis unless the grid tiles
  /// an H x W map exactly with full coverage.
  void validate(std::size_t height, std::size_t width) const {
    check_axis("height", height, window_h, stride_h);
    check_axis("width", width, window_w, stride_w);
  }

  std::size_t rows(std::size_t height) const { return (height - window_h) / stride_h + 1; }
  std::size_t cols(std::size_t width) const { return (width - window_w) / stride_w + 1; }
  std::size_t count(std::size_t height, std::size_t width) const {
    validate(height, width);
    return rows(height) * cols(width);
  }

  bool operator==(const PatchGrid&) const = default;

 private:
  static void check_axis(const char* axis, std::size_t extent, std::size_t window, std::size_t stride) {
    const std::string a(axis);
    if (window == 0 || stride == 0) throw std::invalid_argument("PatchGrid: zero window or stride on " + a + " axis");
    if (window > extent) throw std::invalid_argument("PatchGrid: window exceeds extent on " + a + " axis");
    if ((extent - window) % stride != 0)
      throw std::invalid_argument("PatchGrid: (extent - window) not divisible by stride on " + a + " axis");
    if (extent > window && stride > window)
      throw std::invalid_argument("PatchGrid: stride larger than window leaves gaps on " + a + " axis");
  }
};

/// Crops in row-major order (top-left first).
inline std::vector<LatentTensor> extract_patches(const LatentTensor& x, const PatchGrid& g) {
  g.validate(x.height(), x.width());
  const std::size_t nr = g.rows(x.height()), nc = g.cols(x.width());
  std::vector<LatentTensor> patches;
  patches.reserve(nr * nc);
  for (std::size_t pr = 0; pr < nr; ++pr)
    for (std::size_t pc = 0; pc < nc; ++pc) {
      LatentTensor p = x.resized(g.window_h, g.window_w, x.level());
      const std::size_t y0 = pr * g.stride_h, x0 = pc * g.stride_w;
      for (std::size_t pl = 0; pl < x.planes(); ++pl) {
        auto src = x.plane(pl);
        auto dst = p.plane(pl);
        for (std::size_t y = 0; y < g.window_h; ++y)
          for (std::size_t xx = 0; xx < g.window_w; ++xx)
            dst[y * g.window_w + xx] = src[(y0 + y) * x.width() + x0 + xx];
      }
      patches.push_back(std::move(p));
    }
  return patches;
}

/// Inverse of extract_patches: every cell becomes the mean of the patches
/// covering it, summed in row-major patch order.
inline LatentTensor reconstruct_patches(std::span<const LatentTensor> patches, const PatchGrid& g,
                                        const LatentTensor& target_shape) {
  const std::size_t n = g.count(target_shape.height(), target_shape.width());
  if (patches.size() != n)
    throw std::invalid_argument("reconstruct_patches: expected " + std::to_string(n) + " patches, got " +
                                std::to_string(patches.size()));
  LatentTensor out = LatentTensor::zeros_like(target_shape);
  const std::size_t w = out.width();
  std::vector<double> counts(out.plane_size(), 0.0);
  const std::size_t nc = g.cols(out.width());
  for (std::size_t k = 0; k < n; ++k) {
    const LatentTensor& p = patches[k];
    if (p.channels() != out.channels() || p.frames() != out.frames() || p.height() != g.window_h ||
        p.width() != g.window_w)
      throw std::invalid_argument("reconstruct_patches: patch " + std::to_string(k) + " has wrong shape");
    const std::size_t y0 = (k / nc) * g.stride_h, x0 = (k % nc) * g.stride_w;
    for (std::size_t pl = 0; pl < out.planes(); ++pl) {
      auto src = p.plane(pl);
      auto dst = out.plane(pl);
      for (std::size_t y = 0; y < g.window_h; ++y)
        for (std::size_t xx = 0; xx < g.window_w; ++xx) dst[(y0 + y) * w + x0 + xx] += src[y * g.window_w + xx];
    }
    for (std::size_t y = 0; y < g.window_h; ++y)
      for (std::size_t xx = 0; xx < g.window_w; ++xx) counts[(y0 + y) * w + x0 + xx] += 1.0;
  }
  for (std::size_t pl = 0; pl < out.planes(); ++pl) {
    auto dst = out.plane(pl);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] /= counts[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax

/// In-place softmax(scores / (temperature * sqrt(scale))) with max subtraction.
inline void softmax_scaled_inplace(std::span<double> scores, double temperature, double scale) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_scaled: temperature must be > 0");
  if (!(scale > 0.0)) throw std::invalid_argument("softmax_scaled: scale must be > 0");
  if (scores.empty()) return;
  const double inv = 1.0 / (temperature * std::sqrt(scale));
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) m = std::max(m, s);
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp((s - m) * inv);
    sum += s;
  }
  for (double& s : scores) s /= sum;
}

inline std::vector<double> softmax_scaled(std::span<const double> scores, double temperature, double scale) {
  std::vector<double> out(scores.begin(), scores.end());
  softmax_scaled_inplace(out, temperature, scale);
  return out;
}

}  // namespace cinescale
