#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cinescale/analysis.hpp"
#include "cinescale/cascade.hpp"
#include "cinescale/dit.hpp"
#include "cinescale/parallel.hpp"
#include "cinescale/synthetic.hpp"
#include "cinescale/unet.hpp"
#include "support/goldens.hpp"
#include "support/helpers.hpp"

using namespace cinescale;

namespace {

/// Predicts a constant noise value everywhere.
class ConstantDenoiser : public Denoiser {
 public:
  explicit ConstantDenoiser(double v = 0.0) : v_(v) {}
  LatentTensor predict(const LatentTensor& z, double, const Conditioning&, const DenoiseHooks&) const override {
    LatentTensor out = LatentTensor::zeros_like(z);
    for (double& x : out.data()) x = v_;
    return out;
  }
  std::size_t latent_channels() const override { return 12; }
  bool supports_video() const override { return true; }
  std::string backbone() const override { return "dit"; }

 private:
  double v_;
};

TinyDit small_dit(std::size_t base, std::uint64_t seed) {
  DitConfig c;
  c.train_extent = {1, base / 2, base / 2};
  return TinyDit::seeded(c, seed);
}

CascadeConfig dit_config(std::size_t base, int steps) {
  CascadeConfig c;
  c.seed = 7;
  c.base.height = c.base.width = base;
  c.base.steps = steps;
  return c;
}

StageConfig stage(int level) {
  StageConfig s;
  s.level = level;
  return s;
}

std::vector<double> lowpassed(const LatentTensor& z, double sigma) {
  const auto low = gaussian_lowpass(z, FrequencyFilter(sigma));
  return {low.data().begin(), low.data().end()};
}

}  // namespace

TEST(GenerateBase, DeterministicAndShaped) {
  const auto m = small_dit(8, 1);
  const auto cfg = dit_config(8, 6);
  const auto a = generate_base(cfg, m);
  EXPECT_EQ(a, generate_base(cfg, m));
  EXPECT_EQ(a.level(), 1);
  EXPECT_EQ(a.height(), 8u);
  EXPECT_EQ(a.width(), 8u);
  EXPECT_TRUE(a.all_finite());
}

TEST(GenerateBase, ZeroEpsTelescopes) {
  const ConstantDenoiser zero;
  auto cfg = dit_config(4, 50);
  cfg.base.beta_kind = BetaKind::linear;
  cfg.base.beta_start = 1e-4;
  cfg.base.beta_end = 0.02;
  const auto z = generate_base(cfg, zero);
  const auto zT = normal_like(LatentTensor(12, 4, 4), stream_seed(cfg.seed, "base"));
  // unrolled product of the per-step ratios
  const auto s = cfg.base.schedule();
  const auto ts = sampling_timesteps(1000, 50);
  double gain = 1.0;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) gain *= std::sqrt(s.alpha_bar_at(ts[i + 1]) / s.alpha_bar_at(ts[i]));
  EXPECT_NEAR(gain, goldens::kZeroEpsGain, 1e-9);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z.data()[i], zT.data()[i] * gain, 1e-9 * std::abs(gain));
}

TEST(GenerateBase, BackboneTaskMismatch) {
  const auto u = TinyUnet::seeded(UnetConfig{}, 1);
  auto cfg = dit_config(8, 2);
  cfg.backbone = Backbone::unet;
  cfg.task = Task::t2v;
  cfg.base.frames = 2;
  EXPECT_THROW(generate_base(cfg, u), std::invalid_argument);
  cfg.task = Task::t2i;
  cfg.base.frames = 1;
  EXPECT_NO_THROW(generate_base(cfg, u));
  cfg.backbone = Backbone::dit;
  EXPECT_THROW(generate_base(cfg, u), std::invalid_argument);
}

TEST(UpscaleStage, FullyAnchoredIsPureUpsample) {
  const auto m = small_dit(4, 2);
  auto cfg = dit_config(4, 10);
  cfg.base.timesteps = 100;
  cfg.base.beta_start = cfg.base.beta_end = 1e-16;
  auto st = stage(2);
  st.alpha_default = 1e-300;
  const auto z0 = testing_support::random_tensor(12, 4, 4, 3);
  const auto out = upscale_stage(z0, st, cfg, m);
  testing_support::expect_near_tensor(out, upsample_phi(z0, st), 1e-6);
}

TEST(UpscaleStage, DoublesDimsAndChecksLevel) {
  const auto m = small_dit(4, 2);
  auto cfg = dit_config(4, 4);
  auto z0 = testing_support::random_tensor(12, 4, 6, 3);
  const auto out = upscale_stage(z0, stage(2), cfg, m);
  EXPECT_EQ(out.height(), 8u);
  EXPECT_EQ(out.width(), 12u);
  EXPECT_EQ(out.level(), 2);
  EXPECT_THROW(upscale_stage(z0, stage(4), cfg, m), std::invalid_argument);
}

TEST(UpscaleStage, HandComposedStepsWithHalfBlend) {
  const double e = 0.3;
  const ConstantDenoiser model(e);
  auto cfg = dit_config(2, 2);
  auto st = stage(2);
  st.k_fraction = 1.0;
  st.upsample_mode = UpsampleMode::latent;
  const auto z0 = testing_support::random_tensor(12, 2, 2, 4);
  const auto res = run_stage(z0, st, cfg, model);
  ASSERT_EQ(res.K, 1000);
  ASSERT_EQ(res.steps, 2);

  const auto s = cfg.base.schedule();
  const double a1000 = s.alpha_bar_at(1000), a500 = s.alpha_bar_at(500);
  const auto phi = upsample_bilinear(z0, 2);
  const auto eps = normal_like(phi, stream_seed(cfg.seed, "stage.2"));
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double p = phi.data()[i], n = eps.data()[i];
    // renoise to K = T, blend with c = 1, DDIM to 500
    const double zk = std::sqrt(a1000) * p + std::sqrt(1 - a1000) * n;
    const double x0a = (zk - std::sqrt(1 - a1000) * e) / std::sqrt(a1000);
    const double z500 = std::sqrt(a500) * x0a + std::sqrt(1 - a500) * e;
    // blend with c = 0.5 against the anchor at 500, DDIM to 0
    const double anchor = std::sqrt(a500) * p + std::sqrt(1 - a500) * n;
    const double zhat = 0.5 * anchor + 0.5 * z500;
    const double expect = (zhat - std::sqrt(1 - a500) * e) / std::sqrt(a500);
    EXPECT_NEAR(res.z0.data()[i], expect, 1e-9);
  }
}

TEST(RunCascade, EmptyStagesEqualsBase) {
  const auto m = small_dit(8, 5);
  const auto cfg = dit_config(8, 4);
  const auto res = run_cascade(cfg, m);
  ASSERT_EQ(res.stages.size(), 1u);
  EXPECT_EQ(res.final_latent(), generate_base(cfg, m));
  EXPECT_EQ(res.rgb, codec_decode(generate_base(cfg, m)));
}

TEST(RunCascade, TwoStagesReachLevelFour) {
  const ConstantDenoiser zero;
  auto cfg = dit_config(16, 5);
  cfg.stages = {stage(2), stage(4)};
  const auto res = run_cascade(cfg, zero);
  EXPECT_EQ(res.final_latent().level(), 4);
  EXPECT_EQ(res.final_latent().height(), 64u);
  EXPECT_EQ(res.rgb.height(), 128u);
  cfg.stages = {stage(2), stage(8)};
  EXPECT_THROW(run_cascade(cfg, zero), std::invalid_argument);
}

TEST(RunCascade, ImageToVideoKeepsFirstFrame) {
  const auto m = small_dit(4, 6);
  auto cfg = dit_config(4, 5);
  cfg.task = Task::i2v;
  cfg.base.frames = 3;
  cfg.stages = {stage(2)};
  SceneConfig sc;
  sc.height = sc.width = 16;
  const auto ref = render_scene(sc, 9);
  const auto res = run_cascade(cfg, m, &ref);
  ASSERT_EQ(res.rgb.frames(), 3u);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) EXPECT_NEAR(res.rgb.at(c, 0, y, x), ref.at(c, y, x), 1e-6);
  EXPECT_THROW(run_cascade(cfg, m), std::invalid_argument);
}

TEST(RunCascade, BitwiseStableAcrossThreadCounts) {
  const auto m = small_dit(8, 8);
  auto cfg = dit_config(8, 4);
  cfg.stages = {stage(2)};
  set_num_threads(1);
  const auto a = run_cascade(cfg, m);
  set_num_threads(4);
  const auto b = run_cascade(cfg, m);
  set_num_threads(1);
  EXPECT_EQ(a.final_latent(), b.final_latent());
  EXPECT_EQ(a.rgb, b.rgb);
}

TEST(RunCascade, UnetTailStepsRunUndilated) {
  const auto u = TinyUnet::seeded(UnetConfig{}, 3);
  auto cfg = dit_config(8, 10);
  cfg.backbone = Backbone::unet;
  cfg.stages = {stage(2)};
  HookLog log;
  run_cascade(cfg, u, nullptr, &log);
  const auto ev = log.events();
  ASSERT_FALSE(ev.empty());
  const int n = ev.front().stage_steps;
  const int tail = tail_steps(0.25, n);
  bool saw_dilated = false;
  for (const auto& e : ev) {
    if (e.step_index >= n - tail || e.block.starts_with("up")) {
      EXPECT_EQ(e.dilation, 1) << e.block << " step " << e.step_index;
    } else {
      EXPECT_EQ(e.dilation, 2);
      saw_dilated = true;
    }
    EXPECT_EQ(e.mode, AttentionMode::fused);
  }
  EXPECT_TRUE(saw_dilated);
}

TEST(RegionAlpha, FallbackAndTotalCover) {
  const auto none = build_region_alpha({}, {}, 1.5, 3, 3);
  for (double v : none.map) EXPECT_EQ(v, 1.5);
  const auto all = build_region_alpha({Mask::rect(3, 3, 0, 0, 3, 3)}, {2.0}, 1.0, 3, 3);
  for (double v : all.map) EXPECT_EQ(v, 2.0);
}

TEST(RegionAlpha, HalfPlanesMatchFixture) {
  Mask a(4, 4), b(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      a.cells[y * 4 + x] = x + y < 3;
      b.cells[y * 4 + x] = x + y > 3;
    }
  const auto dc = build_region_alpha({a, b}, {1.0, 3.0}, 2.0, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(dc.map[i], goldens::kRegionAlpha4x4[i]);
}

TEST(RegionAlpha, OverlapNamesCell) {
  try {
    build_region_alpha({Mask::rect(4, 4, 0, 0, 2, 2), Mask::rect(4, 4, 1, 1, 3, 3)}, {1.0, 2.0}, 1.0, 4, 4);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("overlap at cell (1, 1)"), std::string::npos) << e.what();
  }
}

TEST(RegionConditions, SharedPromptIsBitwiseNoInjection) {
  const auto u = TinyUnet::seeded(UnetConfig{}, 4);
  const auto z = testing_support::random_tensor(12, 8, 8, 5);
  const Mat g = u.prompt_tokens("global");
  const auto base = Conditioning::single(g);
  const auto inj = inject_region_conditions(base, {Mask::rect(8, 8, 0, 0, 4, 8)}, {g}, 8, 8);
  EXPECT_EQ(u.predict(z, 3.0, base, {}), u.predict(z, 3.0, inj, {}));
  const auto d = small_dit(8, 6);
  const auto injd = inject_region_conditions(Conditioning::single(d.prompt_tokens("g")), {Mask::rect(8, 8, 0, 0, 4, 8)},
                                             {d.prompt_tokens("g")}, 8, 8);
  EXPECT_EQ(d.predict(z, 3.0, Conditioning::single(d.prompt_tokens("g")), {}), d.predict(z, 3.0, injd, {}));
}

TEST(RegionConditions, EmptyMaskNoEffect) {
  const auto u = TinyUnet::seeded(UnetConfig{}, 4);
  const auto z = testing_support::random_tensor(12, 8, 8, 5);
  const auto base = Conditioning::single(u.prompt_tokens("global"));
  const auto inj = inject_region_conditions(base, {Mask(8, 8)}, {u.prompt_tokens("other")}, 8, 8);
  EXPECT_EQ(u.predict(z, 3.0, base, {}), u.predict(z, 3.0, inj, {}));
}

TEST(RegionConditions, RegionCellsSeeOnlyTheirTokens) {
  const auto w = UnetWeights::seeded(UnetConfig{}, 8);
  const auto& b = w.blocks[0];
  const auto h = testing_support::random_tensor(8, 4, 4, 9);
  const Mask ma = Mask::rect(4, 4, 0, 0, 4, 2), mb = Mask::rect(4, 4, 0, 2, 4, 4);
  const Mat ta = w.prompts.tokens("region a"), tb = w.prompts.tokens("region b");
  const auto base = Conditioning::single(w.prompts.tokens("global"));
  const auto c1 = inject_region_conditions(base, {ma, mb}, {ta, tb}, 4, 4);
  const auto c2 = inject_region_conditions(base, {ma, mb}, {ta, Mat(tb.rows, tb.cols)}, 4, 4);
  const auto o1 = cross_attention(h, b.cross_q, b.cross_k, b.cross_v, c1);
  const auto o2 = cross_attention(h, b.cross_q, b.cross_k, b.cross_v, c2);
  bool b_changed = false;
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        if (x < 2) {
          EXPECT_EQ(o1.at(c, y, x), o2.at(c, y, x));
        } else {
          b_changed = b_changed || o1.at(c, y, x) != o2.at(c, y, x);
        }
      }
  EXPECT_TRUE(b_changed);
}

TEST(RegionConditions, ShapeMismatchThrows) {
  const auto base = Conditioning::single(Mat(4, 16));
  EXPECT_THROW(inject_region_conditions(base, {Mask(4, 4)}, {Mat(4, 16)}, 8, 8), std::invalid_argument);
}

TEST(Anchoring, CorrelationFallsWithAlpha) {
  const auto m = small_dit(8, 10);
  const std::vector<double> alphas{0.5, 1.0, 2.0, 4.0};
  std::vector<double> mean_r(alphas.size(), 0.0);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto cfg = dit_config(8, 10);
    cfg.seed = seed;
    const auto z0 = generate_base(cfg, m);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      auto st = stage(2);
      st.alpha_default = alphas[i];
      const auto res = run_stage(z0, st, cfg, m);
      mean_r[i] += pearson(lowpassed(res.z0, 2.0), lowpassed(res.anchor, 2.0)) / 8.0;
    }
  }
  for (std::size_t i = 0; i + 1 < alphas.size(); ++i) EXPECT_GT(mean_r[i], mean_r[i + 1]) << alphas[i];
  EXPECT_GE(mean_r[1], 0.9);
}
