#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cinescale/tensor.hpp"

namespace cinescale {

/// Exactly invertible stand-in for a VAE: 2x2 space-to-depth followed by a
/// fixed orthogonal channel mix (4x4 Hadamard within each block, Kronecker
/// an orthonormal DCT-II across colour channels). Latent channel 0 is the
/// block-mean luminance up to a constant factor.
class ToyCodec {
 public:
  static constexpr std::size_t kFactor = 2;

  explicit ToyCodec(std::size_t rgb_channels = 3) : rgb_(rgb_channels) {
    if (rgb_channels == 0) throw std::invalid_argument("ToyCodec: need at least one channel");
    const std::size_t n = 4 * rgb_;
    mix_.assign(n * n, 0.0);
    // Normalized Sylvester Hadamard of order 4.
    static constexpr int h4[4][4] = {{1, 1, 1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, -1, -1, 1}};
    std::vector<double> dct(rgb_ * rgb_);
    for (std::size_t k = 0; k < rgb_; ++k)
      for (std::size_t i = 0; i < rgb_; ++i) {
        const double scale = k == 0 ? std::sqrt(1.0 / rgb_) : std::sqrt(2.0 / rgb_);
        dct[k * rgb_ + i] =
            scale * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) / rgb_);
      }
    // Row (hadamard row a, dct row k) maps input (block position b, colour i).
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t k = 0; k < rgb_; ++k)
        for (std::size_t b = 0; b < 4; ++b)
          for (std::size_t i = 0; i < rgb_; ++i)
            mix_[(a * rgb_ + k) * n + (b * rgb_ + i)] = 0.5 * h4[a][b] * dct[k * rgb_ + i];
  }

  std::size_t rgb_channels() const { return rgb_; }
  std::size_t latent_channels() const { return 4 * rgb_; }

  LatentTensor encode(const LatentTensor& rgb) const {
    if (rgb.channels() != rgb_) throw std::invalid_argument("codec_encode: expected " + std::to_string(rgb_) + " channels");
    if (rgb.height() % 2 != 0 || rgb.width() % 2 != 0)
      throw std::invalid_argument("codec_encode: spatial dims must be even, got " + rgb.shape_string());
    const std::size_t h = rgb.height() / 2, w = rgb.width() / 2, n = 4 * rgb_;
    LatentTensor out = rgb.temporal() ? LatentTensor::video(n, rgb.frames(), h, w, rgb.level())
                                      : LatentTensor(n, h, w, rgb.level());
    std::vector<double> in(n), mixed(n);
    for (std::size_t f = 0; f < rgb.frames(); ++f)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 0; i < rgb_; ++i) in[b * rgb_ + i] = rgb.at(i, f, 2 * y + b / 2, 2 * x + b % 2);
          for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += mix_[r * n + c] * in[c];
            out.at(r, f, y, x) = s;
          }
        }
    return out;
  }

  LatentTensor decode(const LatentTensor& latent) const {
    const std::size_t n = 4 * rgb_;
    if (latent.channels() != n) throw std::invalid_argument("codec_decode: expected " + std::to_string(n) + " channels");
    const std::size_t h = latent.height() * 2, w = latent.width() * 2;
    LatentTensor out = latent.temporal() ? LatentTensor::video(rgb_, latent.frames(), h, w, latent.level())
                                         : LatentTensor(rgb_, h, w, latent.level());
    std::vector<double> in(n), rgb(n);
    for (std::size_t f = 0; f < latent.frames(); ++f)
      for (std::size_t y = 0; y < latent.height(); ++y)
        for (std::size_t x = 0; x < latent.width(); ++x) {
          for (std::size_t r = 0; r < n; ++r) in[r] = latent.at(r, f, y, x);
          for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += mix_[r * n + c] * in[r];
            rgb[c] = s;
          }
          for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 0; i < rgb_; ++i) out.at(i, f, 2 * y + b / 2, 2 * x + b % 2) = rgb[b * rgb_ + i];
        }
    return out;
  }

 private:
  std::size_t rgb_;
  std::vector<double> mix_;  // row-major (4C x 4C), orthogonal
};

inline LatentTensor codec_encode(const LatentTensor& rgb) { return ToyCodec(rgb.channels()).encode(rgb); }
inline LatentTensor codec_decode(const LatentTensor& latent) {
  if (latent.channels() % 4 != 0) throw std::invalid_argument("codec_decode: channel count must be a multiple of 4");
  return ToyCodec(latent.channels() / 4).decode(latent);
}

}  // namespace cinescale
