#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "cinescale/conditioning.hpp"
#include "cinescale/rope.hpp"
#include "cinescale/tensor.hpp"
#include "cinescale/tensor_ops.hpp"

namespace cinescale {

enum class AttentionMode { global, local, fused };

inline const char* to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::global: return "global";
    case AttentionMode::local: return "local";
    case AttentionMode::fused: return "fused";
  }
  return "?";
}

/// Per-block interception points of the UNet. The defaults are the identity
/// settings: dilation 1 and global self-attention everywhere.
class UnetHooks {
 public:
  virtual ~UnetHooks() = default;
  virtual int dilation(std::string_view /*block*/) const { return 1; }
  virtual AttentionMode attention_mode(std::string_view /*block*/) const { return AttentionMode::global; }
  virtual PatchGrid local_grid(std::string_view /*block*/, std::size_t h, std::size_t w) const {
    return PatchGrid::whole(h, w);
  }
  virtual FrequencyFilter fusion_filter() const { return FrequencyFilter(1.0); }
  /// Called once per block evaluation with the settings actually used.
  virtual void record(std::string_view /*block*/, int /*dilation*/, AttentionMode /*mode*/) const {}
};

/// DiT positional / softmax adaptation. An empty rope means the model's own
/// training configuration (lambda = 1).
struct DitAdaptation {
  std::optional<RopeConfig> rope;
  double temperature = 1.0;
  std::array<double, 3> position_offset{0.0, 0.0, 0.0};
};

struct DenoiseHooks {
  const UnetHooks* unet = nullptr;
  DitAdaptation dit;
};

/// eps_theta(z_t, t, cond). `t` is the model timestep (possibly warped by a
/// schedule shift).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual LatentTensor predict(const LatentTensor& z_t, double t, const Conditioning& cond,
                               const DenoiseHooks& hooks) const = 0;
  virtual std::size_t latent_channels() const = 0;
  virtual bool supports_video() const { return false; }
  virtual std::size_t cond_dim() const { return 1; }
  virtual Mat prompt_tokens(std::string_view /*prompt*/) const { return Mat(PromptTable::kTokens, cond_dim()); }
  virtual std::string backbone() const = 0;
  /// Spatial patch size used to form attention tokens (1 = per cell).
  virtual std::size_t patch_size() const { return 1; }
  /// Rotary layout at the training resolution, for rotary-position backbones.
  virtual std::optional<RopeConfig> base_rope() const { return std::nullopt; }
};

/// Sinusoidal embedding [sin(t w_k), cos(t w_k)] with w_k = 10000^(-k / half).
inline std::vector<double> timestep_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    out[k] = std::sin(t * w);
    out[half + k] = std::cos(t * w);
  }
  return out;
}

}  // namespace cinescale
