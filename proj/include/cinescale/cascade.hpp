#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cinescale/codec.hpp"
#include "cinescale/conditioning.hpp"
#include "cinescale/denoiser.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/rope.hpp"
#include "cinescale/schedule.hpp"
#include "cinescale/tensor_ops.hpp"
#include "cinescale/unet_scale.hpp"

namespace cinescale {

enum class Backbone { unet, dit };
enum class Task { t2i, t2v, i2v };
enum class UpsampleMode { latent, rgb };

struct RegionSpec {
  Mask mask;
  std::optional<double> alpha;
  std::optional<std::string> prompt;

  bool operator==(const RegionSpec&) const = default;
};

struct StageConfig {
  int level = 2;
  double k_fraction = 0.6;
  UpsampleMode upsample_mode = UpsampleMode::rgb;
  double blur_sigma = 0.5;  // RGB-space blur after upsampling; 0 disables
  double alpha_default = 1.0;
  std::vector<RegionSpec> regions;

  // UNet only
  bool dilation_enabled = true;
  int dilation_factor = 0;  // 0 = level
  std::vector<std::string> dilation_blocks{"down.0", "down.1", "mid"};
  double dilation_tail_fraction = 0.25;
  FusionConfig fusion;

  // DiT only
  bool rope_ntk = true;
  bool temperature_auto = true;
  double temperature_value = 1.0;
  double shift = 1.0;

  DilationPolicy dilation_policy() const {
    DilationPolicy p;
    p.allowed_blocks = {dilation_blocks.begin(), dilation_blocks.end()};
    p.factor = !dilation_enabled ? 1 : (dilation_factor > 0 ? dilation_factor : default_dilation(level));
    p.disable_tail_fraction = dilation_tail_fraction;
    return p;
  }

  bool operator==(const StageConfig&) const = default;
};

struct BaseConfig {
  std::size_t height = 16;  // latent cells at level 1
  std::size_t width = 16;
  std::size_t frames = 1;
  int steps = 50;
  int timesteps = 1000;
  BetaKind beta_kind = BetaKind::scaled_linear;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  std::string prompt = "a scene";

  NoiseSchedule schedule() const { return make_schedule(timesteps, beta_start, beta_end, beta_kind); }

  bool operator==(const BaseConfig&) const = default;
};

struct CascadeConfig {
  Backbone backbone = Backbone::dit;
  Task task = Task::t2i;
  std::uint64_t seed = 0;
  double guidance = 1.0;
  BaseConfig base;
  std::vector<StageConfig> stages;

  int final_level() const { return stages.empty() ? 1 : stages.back().level; }
  bool video() const { return task != Task::t2i; }

  void validate() const {
    if (backbone == Backbone::unet && task != Task::t2i)
      throw std::invalid_argument("backbone 'unet' supports only task 't2i'");
    if (!(guidance >= 1.0) || !std::isfinite(guidance)) throw std::invalid_argument("guidance must be >= 1");
    if (base.height == 0 || base.width == 0 || base.frames == 0)
      throw std::invalid_argument("base resolution must be positive");
    if (!video() && base.frames != 1) throw std::invalid_argument("task 't2i' requires frames = 1");
    if (base.steps < 1) throw std::invalid_argument("base steps must be >= 1");
    int prev = 1;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      if (s.level != 2 * prev)
        throw std::invalid_argument("stage " + std::to_string(i) + " has level " + std::to_string(s.level) +
                                    ", expected " + std::to_string(2 * prev));
      prev = s.level;
      if (!(s.k_fraction > 0.0 && s.k_fraction <= 1.0))
        throw std::invalid_argument("stage " + std::to_string(i) + ": k_fraction must be in (0, 1]");
      if (!(s.alpha_default > 0.0)) throw std::invalid_argument("stage " + std::to_string(i) + ": alpha must be > 0");
      if (!(s.blur_sigma >= 0.0)) throw std::invalid_argument("stage " + std::to_string(i) + ": blur must be >= 0");
      if (!(s.shift >= 1.0)) throw std::invalid_argument("stage " + std::to_string(i) + ": shift must be >= 1");
      if (!(s.temperature_value > 0.0))
        throw std::invalid_argument("stage " + std::to_string(i) + ": temperature must be > 0");
      s.dilation_policy().validate();
      s.fusion.validate();
      const std::size_t h = base.height * s.level, w = base.width * s.level;
      for (const auto& r : s.regions) {
        if (r.mask.height != h || r.mask.width != w)
          throw std::invalid_argument("stage " + std::to_string(i) + ": region mask is " +
                                      std::to_string(r.mask.height) + "x" + std::to_string(r.mask.width) +
                                      ", stage latent is " + std::to_string(h) + "x" + std::to_string(w));
        if (r.alpha && !(*r.alpha > 0.0))
          throw std::invalid_argument("stage " + std::to_string(i) + ": region alpha must be > 0");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Region maps

/// Per-cell alpha: values on masks, `fallback` elsewhere.
inline DetailControl build_region_alpha(const std::vector<Mask>& masks, const std::vector<double>& values,
                                        double fallback, std::size_t h, std::size_t w) {
  if (masks.size() != values.size()) throw std::invalid_argument("build_region_alpha: masks/values length mismatch");
  std::vector<double> map(h * w, fallback);
  std::vector<int> owner(h * w, -1);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    if (masks[m].height != h || masks[m].width != w)
      throw std::invalid_argument("build_region_alpha: mask " + std::to_string(m) + " shape mismatch");
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (!masks[m].at(y, x)) continue;
        const std::size_t i = y * w + x;
        if (owner[i] >= 0)
          throw std::invalid_argument("region masks " + std::to_string(owner[i]) + " and " + std::to_string(m) +
                                      " overlap at cell (" + std::to_string(y) + ", " + std::to_string(x) + ")");
        owner[i] = static_cast<int>(m);
        map[i] = values[m];
      }
  }
  return DetailControl::spatial(std::move(map), h, w);
}

/// Adds one token set per region; cells inside region i select set i + 1.
inline Conditioning inject_region_conditions(const Conditioning& cond, const std::vector<Mask>& masks,
                                             const std::vector<Mat>& tokens, std::size_t h, std::size_t w) {
  if (masks.size() != tokens.size()) throw std::invalid_argument("inject_region_conditions: masks/tokens mismatch");
  if (cond.sets.empty()) throw std::invalid_argument("inject_region_conditions: no global condition");
  Conditioning out = cond;
  out.sets.resize(1);
  out.selector.height = h;
  out.selector.width = w;
  out.selector.index.assign(h * w, 0);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    if (masks[m].height != h || masks[m].width != w)
      throw std::invalid_argument("inject_region_conditions: mask " + std::to_string(m) + " is " +
                                  std::to_string(masks[m].height) + "x" + std::to_string(masks[m].width) +
                                  ", latent is " + std::to_string(h) + "x" + std::to_string(w));
    out.sets.push_back(tokens[m]);
    for (std::size_t i = 0; i < h * w; ++i) {
      if (!masks[m].cells[i]) continue;
      if (out.selector.index[i] != 0)
        throw std::invalid_argument("region masks overlap at cell (" + std::to_string(i / w) + ", " +
                                    std::to_string(i % w) + ")");
      out.selector.index[i] = m + 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag) { return CounterRng(seed).derive(tag).seed(); }

inline LatentTensor guided_eps(const Denoiser& model, const LatentTensor& z, double t, const Conditioning& cond,
                               const Conditioning& uncond, double guidance, const DenoiseHooks& hooks) {
  LatentTensor eps = model.predict(z, t, cond, hooks);
  if (!eps.same_shape(z))
    throw std::invalid_argument("denoiser returned " + eps.shape_string() + " for input " + z.shape_string());
  if (guidance != 1.0) {
    const LatentTensor eu = model.predict(z, t, uncond, hooks);
    eps = axpby(1.0 - guidance, eu, guidance, eps);
  }
  require_finite(eps, "denoiser");
  return eps;
}

/// Reference frame handling for image-to-video: frame 0 of the latent is
/// replaced by the forward-noised reference latent.
struct FrameClamp {
  LatentTensor ref;  // [C, H, W] reference latent at this level
  LatentTensor eps;  // matching noise draw

  void apply(LatentTensor& z, double alpha_bar) const {
    const LatentTensor noisy = noise_with_alpha_bar(ref, alpha_bar, eps);
    for (std::size_t c = 0; c < z.channels(); ++c) {
      auto src = noisy.plane(c);
      auto dst = z.plane(c * z.frames());
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
};

inline std::optional<FrameClamp> make_clamp(const CascadeConfig& cfg, const LatentTensor* reference_rgb, int level,
                                            const std::string& tag) {
  if (cfg.task != Task::i2v) return std::nullopt;
  if (!reference_rgb) throw std::invalid_argument("task 'i2v' needs a reference frame");
  const int fl = cfg.final_level();
  if (reference_rgb->channels() != 3 || reference_rgb->temporal() ||
      reference_rgb->height() != 2 * cfg.base.height * fl || reference_rgb->width() != 2 * cfg.base.width * fl)
    throw std::invalid_argument("i2v reference must be RGB " + std::to_string(2 * cfg.base.height * fl) + "x" +
                                std::to_string(2 * cfg.base.width * fl) + ", got " + reference_rgb->shape_string());
  FrameClamp c;
  c.ref = codec_encode(downsample_area(*reference_rgb, fl / level));
  c.ref.set_level(level);
  c.eps = normal_like(c.ref, stream_seed(cfg.seed, tag));
  return c;
}

inline LatentTensor initial_shape(const CascadeConfig& cfg, const Denoiser& model, int level) {
  const std::size_t C = model.latent_channels(), h = cfg.base.height * level, w = cfg.base.width * level;
  return cfg.video() ? LatentTensor::video(C, cfg.base.frames, h, w, level) : LatentTensor(C, h, w, level);
}

inline void check_model(const CascadeConfig& cfg, const Denoiser& model) {
  cfg.validate();
  if (cfg.video() && !model.supports_video())
    throw std::invalid_argument("backbone '" + model.backbone() + "' cannot run video task");
  if ((cfg.backbone == Backbone::unet) != (model.backbone() == "unet"))
    throw std::invalid_argument("configured backbone does not match the loaded model '" + model.backbone() + "'");
}

inline Conditioning global_condition(const CascadeConfig& cfg, const Denoiser& model) {
  return Conditioning::single(model.prompt_tokens(cfg.base.prompt));
}

/// Full reverse loop from T at the training resolution.
inline LatentTensor generate_base(const CascadeConfig& cfg, const Denoiser& model,
                                  const LatentTensor* reference_rgb = nullptr) {
  check_model(cfg, model);
  const NoiseSchedule s = cfg.base.schedule();
  const int T = s.steps();
  LatentTensor z = normal_like(initial_shape(cfg, model, 1), stream_seed(cfg.seed, "base"));
  const auto clamp = make_clamp(cfg, reference_rgb, 1, "reference.1");
  if (clamp) clamp->apply(z, s.alpha_bar_at(T));
  const Conditioning cond = global_condition(cfg, model);
  const Conditioning uncond = Conditioning::single(model.prompt_tokens(""));
  const auto ts = sampling_timesteps(T, cfg.base.steps);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const LatentTensor eps = guided_eps(model, z, s.model_time(ts[i]), cond, uncond, cfg.guidance, {});
    z = reverse_step_ddim(z, eps, ts[i], ts[i + 1], s);
    if (clamp) clamp->apply(z, s.alpha_bar_at(ts[i + 1]));
  }
  require_finite(z, "generate_base");
  return z;
}

struct StageResult {
  int level = 1;
  LatentTensor z0;
  LatentTensor anchor;  // phi(z0_prev); empty for the base
  int K = 0;
  int steps = 0;
  double temperature = 1.0;
  std::array<double, 3> lambda{1.0, 1.0, 1.0};
};

/// phi: latent-space or RGB-space 2x upsampling of a clean latent.
inline LatentTensor upsample_phi(const LatentTensor& z0, const StageConfig& st) {
  LatentTensor up;
  if (st.upsample_mode == UpsampleMode::latent) {
    up = upsample_bilinear(z0, 2);
  } else {
    LatentTensor rgb = upsample_bilinear(codec_decode(z0), 2);
    if (st.blur_sigma > 0.0) rgb = gaussian_lowpass(rgb, FrequencyFilter(st.blur_sigma));
    up = codec_encode(rgb);
  }
  up.set_level(z0.level() * 2);
  return up;
}

/// Upsample, re-noise to K, and denoise at the doubled level with detail
/// blending before every denoiser call.
inline StageResult run_stage(const LatentTensor& z0_prev, const StageConfig& st, const CascadeConfig& cfg,
                             const Denoiser& model, const LatentTensor* reference_rgb = nullptr,
                             HookLog* log = nullptr) {
  if (z0_prev.level() * 2 != st.level)
    throw std::invalid_argument("upscale_stage: input level " + std::to_string(z0_prev.level()) +
                                " does not match stage level " + std::to_string(st.level) + " / 2");
  const std::size_t h = z0_prev.height() * 2, w = z0_prev.width() * 2;
  const NoiseSchedule s = shift_timesteps(cfg.base.schedule(), st.shift);
  const int T = s.steps();

  StageResult res;
  res.level = st.level;
  res.K = std::clamp(static_cast<int>(std::lround(st.k_fraction * T)), 1, T);
  res.steps = std::max(1, static_cast<int>(std::lround(static_cast<double>(cfg.base.steps) * res.K / T)));
  res.anchor = upsample_phi(z0_prev, st);

  const std::string tag = "stage." + std::to_string(st.level);
  const LatentTensor anchor_eps = normal_like(res.anchor, stream_seed(cfg.seed, tag));
  LatentTensor z = forward_noise(res.anchor, res.K, anchor_eps, s);
  const auto clamp = make_clamp(cfg, reference_rgb, st.level, "reference." + std::to_string(st.level));
  if (clamp) clamp->apply(z, s.alpha_bar_at(res.K));

  // detail control and region conditions
  std::vector<Mask> alpha_masks, prompt_masks;
  std::vector<double> alpha_values;
  std::vector<Mat> prompt_tokens;
  for (const auto& r : st.regions) {
    if (r.alpha) {
      alpha_masks.push_back(r.mask);
      alpha_values.push_back(*r.alpha);
    }
    if (r.prompt) {
      prompt_masks.push_back(r.mask);
      prompt_tokens.push_back(model.prompt_tokens(*r.prompt));
    }
  }
  const DetailControl detail = alpha_masks.empty()
                                   ? DetailControl::uniform(st.alpha_default)
                                   : build_region_alpha(alpha_masks, alpha_values, st.alpha_default, h, w);
  Conditioning cond = global_condition(cfg, model);
  if (!prompt_masks.empty()) cond = inject_region_conditions(cond, prompt_masks, prompt_tokens, h, w);
  const Conditioning uncond = Conditioning::single(model.prompt_tokens(""));

  // backbone adaptations
  DenoiseHooks hooks;
  if (auto rope = model.base_rope()) {
    const std::size_t p = model.patch_size();
    const std::array<std::size_t, 3> train{z0_prev.frames(), cfg.base.height / p, cfg.base.width / p};
    const std::array<std::size_t, 3> target{z0_prev.frames(), h / p, w / p};
    rope->train_extent = train;
    rope->target_extent = target;
    if (st.rope_ntk) *rope = rope->with_ntk();
    res.lambda = rope->lambda;
    hooks.dit.rope = *rope;
    const double n_train = static_cast<double>(train[0] * train[1] * train[2]);
    const double n_target = static_cast<double>(target[0] * target[1] * target[2]);
    res.temperature = st.temperature_auto ? attention_temperature(std::max(2.0, n_train), std::max(2.0, n_target))
                                          : st.temperature_value;
    hooks.dit.temperature = res.temperature;
  }

  const auto ts = sampling_timesteps(res.K, res.steps);
  const int n = static_cast<int>(ts.size()) - 1;
  for (int i = 0; i < n; ++i) {
    const int t = ts[i];
    const LatentTensor anchor_t = forward_noise(res.anchor, t, anchor_eps, s);
    const LatentTensor z_hat = detail_blend(anchor_t, z, t, T, detail);
    std::optional<ScaleHooks> sh;
    if (cfg.backbone == Backbone::unet) {
      sh.emplace(st.dilation_policy(), st.fusion, st.level, i, n, log);
      hooks.unet = &*sh;
    }
    const LatentTensor eps = guided_eps(model, z_hat, s.model_time(t), cond, uncond, cfg.guidance, hooks);
    z = reverse_step_ddim(z_hat, eps, t, ts[i + 1], s);
    if (clamp) clamp->apply(z, s.alpha_bar_at(ts[i + 1]));
    hooks.unet = nullptr;
  }
  z.set_level(st.level);
  require_finite(z, "upscale_stage");
  res.z0 = std::move(z);
  return res;
}

inline LatentTensor upscale_stage(const LatentTensor& z0_prev, const StageConfig& st, const CascadeConfig& cfg,
                                  const Denoiser& model, const LatentTensor* reference_rgb = nullptr) {
  return run_stage(z0_prev, st, cfg, model, reference_rgb).z0;
}

struct CascadeResult {
  std::vector<StageResult> stages;  // [0] is the base generation
  LatentTensor rgb;                 // decoded final latent

  const LatentTensor& final_latent() const { return stages.back().z0; }
};

inline CascadeResult run_cascade(const CascadeConfig& cfg, const Denoiser& model,
                                 const LatentTensor* reference_rgb = nullptr, HookLog* log = nullptr) {
  CascadeResult out;
  StageResult base;
  base.z0 = generate_base(cfg, model, reference_rgb);
  base.steps = cfg.base.steps;
  base.K = cfg.base.timesteps;
  out.stages.push_back(std::move(base));
  for (const auto& st : cfg.stages) {
    StageResult r = run_stage(out.stages.back().z0, st, cfg, model, reference_rgb, log);
    out.stages.push_back(std::move(r));
  }
  out.rgb = codec_decode(out.final_latent());
  return out;
}

}  // namespace cinescale
