#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cinescale/denoiser.hpp"
#include "cinescale/tensor_ops.hpp"
#include "cinescale/unet.hpp"

namespace cinescale {

struct DilationPolicy {
  std::set<std::string, std::less<>> allowed_blocks{"down.0", "down.1", "mid"};
  int factor = 1;
  double disable_tail_fraction = 0.25;

  void validate() const {
    if (factor < 1) throw std::invalid_argument("DilationPolicy: factor must be >= 1");
    if (!(disable_tail_fraction >= 0.0 && disable_tail_fraction < 1.0))
      throw std::invalid_argument("DilationPolicy: tail fraction must be in [0, 1)");
    for (const auto& b : allowed_blocks) unet_block_index(b);
  }

  bool operator==(const DilationPolicy&) const = default;
};

/// Default dilation for a resolution level: nearest integer, at least 1.
inline int default_dilation(double level) { return std::max(1, static_cast<int>(std::lround(level))); }

/// Number of final stage-local steps that run undilated.
inline int tail_steps(double fraction, int stage_steps) {
  return static_cast<int>(std::ceil(fraction * stage_steps - 1e-9));
}

/// policy.factor for allowed down/mid blocks outside the tail window, else 1.
inline int dilation_for(const DilationPolicy& policy, std::string_view block_id, int step_index, int stage_steps) {
  const std::size_t idx = unet_block_index(block_id);
  if (stage_steps < 1 || step_index < 0 || step_index >= stage_steps)
    throw std::invalid_argument("dilation_for: step " + std::to_string(step_index) + " outside stage of " +
                                std::to_string(stage_steps) + " steps");
  if (kUnetBlocks[idx].starts_with("up")) return 1;
  if (policy.allowed_blocks.find(block_id) == policy.allowed_blocks.end()) return 1;
  if (step_index >= stage_steps - tail_steps(policy.disable_tail_fraction, stage_steps)) return 1;
  return policy.factor;
}

/// Local-attention crop layout: window = training map size of the block,
/// stride = window * stride_fraction.
struct FusionConfig {
  AttentionMode mode = AttentionMode::fused;
  double sigma = 1.0;
  double stride_fraction = 0.5;

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("FusionConfig: sigma must be > 0");
    if (!(stride_fraction > 0.0 && stride_fraction <= 1.0))
      throw std::invalid_argument("FusionConfig: stride_fraction must be in (0, 1]");
  }

  PatchGrid grid(std::size_t h, std::size_t w, int level) const {
    if (level < 1 || h % level != 0 || w % level != 0)
      throw std::invalid_argument("FusionConfig: map " + std::to_string(h) + "x" + std::to_string(w) +
                                  " not divisible by level " + std::to_string(level));
    const std::size_t wh = h / level, ww = w / level;
    const auto stride = [&](std::size_t win) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(win * stride_fraction)));
    };
    PatchGrid g{wh, ww, stride(wh), stride(ww)};
    g.validate(h, w);
    return g;
  }

  bool operator==(const FusionConfig&) const = default;
};

struct HookEvent {
  int step_index;
  int stage_steps;
  std::string block;
  int dilation;
  AttentionMode mode;
};

/// Thread-safe append-only record of the hook decisions made during a run.
class HookLog {
 public:
  void add(HookEvent e) {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(e));
  }
  std::vector<HookEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }
  void clear() {
    std::lock_guard lock(mu_);
    events_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<HookEvent> events_;
};

/// UNet hooks for one reverse step of a higher-resolution stage.
class ScaleHooks : public UnetHooks {
 public:
  ScaleHooks(DilationPolicy policy, FusionConfig fusion, int level, int step_index, int stage_steps,
             HookLog* log = nullptr)
      : policy_(std::move(policy)), fusion_(fusion), level_(level), step_(step_index), steps_(stage_steps), log_(log),
        filter_(fusion.sigma) {
    policy_.validate();
    fusion_.validate();
  }

  int dilation(std::string_view block) const override { return dilation_for(policy_, block, step_, steps_); }
  AttentionMode attention_mode(std::string_view) const override {
    return level_ == 1 ? AttentionMode::global : fusion_.mode;
  }
  PatchGrid local_grid(std::string_view, std::size_t h, std::size_t w) const override {
    return fusion_.grid(h, w, level_);
  }
  FrequencyFilter fusion_filter() const override { return filter_; }
  void record(std::string_view block, int d, AttentionMode mode) const override {
    if (log_) log_->add({step_, steps_, std::string(block), d, mode});
  }

 private:
  DilationPolicy policy_;
  FusionConfig fusion_;
  int level_;
  int step_;
  int steps_;
  HookLog* log_;
  FrequencyFilter filter_;
};

}  // namespace cinescale
