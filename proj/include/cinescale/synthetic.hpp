#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cinescale/codec.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/tensor.hpp"

namespace cinescale {

/// Procedural RGB scenes: a flat background plus a few Gaussian blobs,
/// optionally drifting linearly across frames.
struct SceneConfig {
  std::size_t height = 32;  // RGB pixels
  std::size_t width = 32;
  std::size_t frames = 1;
  bool video = false;
  int min_blobs = 2;
  int max_blobs = 4;

  void validate() const {
    if (height < 2 || width < 2 || height % 2 || width % 2)
      throw std::invalid_argument("SceneConfig: RGB dims must be even and >= 2");
    if (min_blobs < 0 || max_blobs < min_blobs) throw std::invalid_argument("SceneConfig: bad blob count range");
    if (frames == 0) throw std::invalid_argument("SceneConfig: frames must be >= 1");
  }
};

inline LatentTensor render_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng rng(seed);
  LatentTensor rgb = cfg.video ? LatentTensor::video(3, cfg.frames, cfg.height, cfg.width)
                               : LatentTensor(3, cfg.height, cfg.width);
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  double bg[3];
  for (double& b : bg) b = rng.uniform(-0.5, 0.5);
  const int blobs = cfg.min_blobs + static_cast<int>(rng.uniform() * (cfg.max_blobs - cfg.min_blobs + 1));
  struct Blob {
    double cy, cx, vy, vx, sigma, color[3];
  };
  std::vector<Blob> bl(blobs);
  for (auto& b : bl) {
    b.cy = rng.uniform(0.0, H);
    b.cx = rng.uniform(0.0, W);
    b.vy = rng.uniform(-1.0, 1.0);
    b.vx = rng.uniform(-1.0, 1.0);
    b.sigma = rng.uniform(H / 10.0, H / 4.0);
    for (double& c : b.color) c = rng.uniform(-1.0, 1.0);
  }
  for (std::size_t f = 0; f < cfg.frames; ++f)
    for (std::size_t y = 0; y < cfg.height; ++y)
      for (std::size_t x = 0; x < cfg.width; ++x) {
        double v[3] = {bg[0], bg[1], bg[2]};
        for (const auto& b : bl) {
          const double dy = y + 0.5 - (b.cy + b.vy * f), dx = x + 0.5 - (b.cx + b.vx * f);
          const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
          for (int c = 0; c < 3; ++c) v[c] += b.color[c] * g;
        }
        for (std::size_t c = 0; c < 3; ++c) rgb.at(c, f, y, x) = std::clamp(v[c], -1.0, 1.0);
      }
  return rgb;
}

inline LatentTensor scene_latent(const SceneConfig& cfg, std::uint64_t seed) {
  return codec_encode(render_scene(cfg, seed));
}

}  // namespace cinescale
