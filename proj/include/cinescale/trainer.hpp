#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cinescale/conditioning.hpp"
#include "cinescale/dit.hpp"
#include "cinescale/lora.hpp"
#include "cinescale/rng.hpp"
#include "cinescale/schedule.hpp"
#include "cinescale/synthetic.hpp"

namespace cinescale {

struct TrainSample {
  LatentTensor z0;
  int t = 1;
  LatentTensor eps;
  Conditioning cond;
};

using TrainBatch = std::vector<TrainSample>;

/// Mean over the batch of mean((eps_theta(z_t, t) - eps)^2); accumulates
/// parameter gradients into `grads` when given.
inline double dit_loss(const DitWeights& w, const TrainBatch& batch, const NoiseSchedule& s, const DitAdaptation& ad,
                       DitWeights* grads) {
  if (batch.empty()) throw std::invalid_argument("training batch is empty");
  double loss = 0.0;
  const double B = static_cast<double>(batch.size());
  for (const auto& smp : batch) {
    const LatentTensor zt = forward_noise(smp.z0, smp.t, smp.eps, s);
    DitTape tape;
    const LatentTensor pred = dit_forward(w, zt, s.model_time(smp.t), smp.cond, ad, grads ? &tape : nullptr);
    LatentTensor diff = axpby(1.0, pred, -1.0, smp.eps);
    double sq = 0.0;
    for (double v : diff.data()) sq += v * v;
    const double n = static_cast<double>(diff.size());
    loss += sq / n / B;
    if (grads) {
      for (double& v : diff.data()) v *= 2.0 / (n * B);
      dit_backward(w, tape, diff, *grads);
    }
  }
  return loss;
}

struct LoraGradients {
  double loss = 0.0;
  std::vector<LoraGrad> grads;  // parallel to adapters
};

/// Loss and adapter gradients with base weights frozen.
inline LoraGradients lora_gradients(const DitWeights& base, const LoraSet& adapters, const TrainBatch& batch,
                                    const NoiseSchedule& s, const DitAdaptation& ad) {
  const DitWeights merged = base.merged(adapters);
  DitWeights g = merged.zeros_like();
  LoraGradients out;
  out.loss = dit_loss(merged, batch, s, ad, &g);
  for (const auto& a : adapters.adapters) out.grads.push_back(lora_grad(a, g.find_linear(a.target)->w));
  return out;
}

/// One SGD step on the adapters; returns the loss before the update.
inline double lora_train_step(const DitWeights& base, LoraSet& adapters, const TrainBatch& batch, double lr,
                              const NoiseSchedule& s, const DitAdaptation& ad = {}) {
  const LoraGradients lg = lora_gradients(base, adapters, batch, s, ad);
  if (!std::isfinite(lg.loss)) {
    std::ostringstream os;
    os << "lora_train_step: non-finite loss (" << lg.loss << ") with " << adapters.adapters.size()
       << " adapters, batch " << batch.size() << ", lr " << lr;
    throw NumericalError(os.str());
  }
  for (std::size_t i = 0; i < adapters.adapters.size(); ++i) {
    auto& a = adapters.adapters[i];
    for (std::size_t k = 0; k < a.down.data.size(); ++k) a.down.data[k] -= lr * lg.grads[i].down.data[k];
    for (std::size_t k = 0; k < a.up.data.size(); ++k) a.up.data[k] -= lr * lg.grads[i].up.data[k];
  }
  return lg.loss;
}

/// Adapters of the given rank on every self-attention projection.
inline LoraSet attention_adapters(const DitConfig& cfg, std::size_t rank, double scale, std::uint64_t seed) {
  LoraSet set;
  for (std::size_t b = 0; b < cfg.blocks; ++b)
    for (const char* p : {"q", "k", "v", "o"})
      set.adapters.push_back(
          make_lora_adapter("blocks." + std::to_string(b) + "." + p, cfg.hidden, cfg.hidden, rank, scale, seed));
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Batch of `size` scene latents with seeded timesteps and noise.
inline TrainBatch synthetic_batch(const SceneConfig& scene, std::size_t size, const NoiseSchedule& s,
                                  const Mat& prompt_tokens, std::uint64_t seed) {
  TrainBatch batch;
  const CounterRng root(seed);
  for (std::size_t i = 0; i < size; ++i) {
    CounterRng r = root.derive(i);
    TrainSample smp;
    smp.z0 = scene_latent(scene, mix64(r.seed() ^ 0x5c3e));
    smp.t = 1 + static_cast<int>(r.uniform() * s.steps());
    if (smp.t > s.steps()) smp.t = s.steps();
    smp.eps = normal_like(smp.z0, mix64(r.seed() ^ 0xe95));
    smp.cond = Conditioning::single(prompt_tokens);
    batch.push_back(std::move(smp));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Full-model pretraining (Adam)

struct PretrainConfig {
  int steps = 2000;
  std::size_t batch = 4;
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  SceneConfig scene;
  std::string prompt = "a scene";
};

/// Trains every linear layer of `w` in place; returns the per-step losses.
inline std::vector<double> pretrain_dit(DitWeights& w, const PretrainConfig& cfg, const NoiseSchedule& s,
                                        const std::function<void(int, double)>& on_step = {}) {
  DitWeights m = w.zeros_like(), v = w.zeros_like();
  const Mat tokens = w.prompts.tokens(cfg.prompt);
  std::vector<double> losses;
  for (int step = 0; step < cfg.steps; ++step) {
    const TrainBatch batch = synthetic_batch(cfg.scene, cfg.batch, s, tokens, mix64(cfg.seed) ^ mix64(step + 1));
    DitWeights g = w.zeros_like();
    const double loss = dit_loss(w, batch, s, {}, &g);
    if (!std::isfinite(loss))
      throw NumericalError("pretrain_dit: non-finite loss at step " + std::to_string(step));
    losses.push_back(loss);
    const double b1t = 1.0 - std::pow(cfg.beta1, step + 1), b2t = 1.0 - std::pow(cfg.beta2, step + 1);
    std::vector<Linear*> pw, pg, pm, pv;
    w.for_each_linear([&](const std::string&, Linear& l) { pw.push_back(&l); });
    g.for_each_linear([&](const std::string&, Linear& l) { pg.push_back(&l); });
    m.for_each_linear([&](const std::string&, Linear& l) { pm.push_back(&l); });
    v.for_each_linear([&](const std::string&, Linear& l) { pv.push_back(&l); });
    for (std::size_t i = 0; i < pw.size(); ++i) {
      for (auto [W, G, M, V] : {std::tuple{&pw[i]->w, &pg[i]->w, &pm[i]->w, &pv[i]->w},
                                std::tuple{&pw[i]->b, &pg[i]->b, &pm[i]->b, &pv[i]->b}}) {
        for (std::size_t k = 0; k < W->data.size(); ++k) {
          const double gk = G->data[k];
          M->data[k] = cfg.beta1 * M->data[k] + (1.0 - cfg.beta1) * gk;
          V->data[k] = cfg.beta2 * V->data[k] + (1.0 - cfg.beta2) * gk * gk;
          W->data[k] -= cfg.lr * (M->data[k] / b1t) / (std::sqrt(V->data[k] / b2t) + cfg.eps);
        }
      }
    }
    if (on_step) on_step(step, loss);
  }
  return losses;
}

}  // namespace cinescale
