#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cinescale/attention.hpp"
#include "cinescale/unet.hpp"
#include "cinescale/unet_scale.hpp"
#include "support/goldens.hpp"
#include "support/helpers.hpp"

using namespace cinescale;
using testing_support::random_tensor;

namespace {

AttentionWeights random_weights(std::size_t c, std::size_t d, std::uint64_t seed) {
  AttentionWeights w{Mat(d, c), Mat(d, c), Mat(c, c)};
  CounterRng rng(seed);
  for (Mat* m : {&w.wq, &w.wk, &w.wv})
    for (double& v : m->data) v = rng.normal();
  return w;
}

// attention over an explicit list of cells of h, computed with plain loops
void manual_attention(const LatentTensor& h, const AttentionWeights& w,
                      const std::vector<std::pair<std::size_t, std::size_t>>& cells, LatentTensor& out) {
  const std::size_t C = h.channels(), d = w.key_dim();
  auto proj = [&](const Mat& m, std::size_t y, std::size_t x) {
    std::vector<double> r(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t c = 0; c < C; ++c) r[i] += m(i, c) * h.at(c, y, x);
    return r;
  };
  for (auto [qy, qx] : cells) {
    const auto q = proj(w.wq, qy, qx);
    std::vector<double> p;
    for (auto [ky, kx] : cells) {
      const auto k = proj(w.wk, ky, kx);
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += q[i] * k[i];
      p.push_back(std::exp(s / std::sqrt(static_cast<double>(d))));
    }
    double z = 0.0;
    for (double v : p) z += v;
    for (std::size_t c = 0; c < C; ++c) out.at(c, qy, qx) = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto v = proj(w.wv, cells[j].first, cells[j].second);
      for (std::size_t c = 0; c < C; ++c) out.at(c, qy, qx) += p[j] / z * v[c];
    }
  }
}

LatentTensor bordered(std::size_t n, std::size_t border, std::uint64_t seed) {
  LatentTensor x(1, n, n);
  CounterRng rng(seed);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t xx = 0; xx < n; ++xx) {
      const bool in = y >= border && xx >= border && y < n - border && xx < n - border;
      x.at(0, y, xx) = in ? rng.normal() : -0.75;
    }
  return x;
}

}  // namespace

TEST(DilationPolicy, UpBlocksNeverDilated) {
  DilationPolicy p;
  p.factor = 4;
  p.allowed_blocks = {"down.0", "down.1", "mid", "up.0", "up.1"};
  for (int step = 0; step < 100; ++step)
    for (auto b : kUnetBlocks) {
      const int d = dilation_for(p, b, step, 100);
      if (b.starts_with("up")) {
        EXPECT_EQ(d, 1) << b;
      }
      EXPECT_GE(d, 1);
    }
}

TEST(DilationPolicy, TailWindowUsesOne) {
  DilationPolicy p;
  p.factor = 2;
  for (int step = 0; step < 20; ++step) EXPECT_EQ(dilation_for(p, "mid", step, 20), step >= 15 ? 1 : 2) << step;
  EXPECT_EQ(dilation_for(p, "mid", 3, 4), 1);
  EXPECT_EQ(dilation_for(p, "mid", 2, 4), 2);
}

TEST(DilationPolicy, EarlyDownBlockGetsFactor) {
  DilationPolicy p;
  p.factor = 2;
  EXPECT_EQ(dilation_for(p, "down.0", 0, 10), 2);
  p.allowed_blocks = {"mid"};
  EXPECT_EQ(dilation_for(p, "down.0", 0, 10), 1);
}

TEST(DilationPolicy, Errors) {
  DilationPolicy p;
  EXPECT_THROW(dilation_for(p, "side.3", 0, 10), std::invalid_argument);
  EXPECT_THROW(dilation_for(p, "mid", 10, 10), std::invalid_argument);
  p.disable_tail_fraction = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(DilationPolicy, DefaultFactorIsLevel) {
  EXPECT_EQ(default_dilation(1), 1);
  EXPECT_EQ(default_dilation(2), 2);
  EXPECT_EQ(default_dilation(2.6), 3);
  EXPECT_EQ(default_dilation(0.3), 1);
}

TEST(AttentionGlobal, OneTokenReturnsValue) {
  const auto w = random_weights(3, 2, 1);
  const auto h = random_tensor(3, 1, 1, 2);
  const auto out = attention_global(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    double v = 0.0;
    for (std::size_t k = 0; k < 3; ++k) v += w.wv(c, k) * h.at(k, 0, 0);
    EXPECT_NEAR(out.at(c, 0, 0), v, 1e-15);
  }
}

TEST(AttentionGlobal, EqualKeysAverageValues) {
  AttentionWeights w{Mat(2, 3), Mat(2, 3), Mat(3, 3)};
  w.wq(0, 0) = 1.0;
  for (std::size_t c = 0; c < 3; ++c) w.wv(c, c) = 1.0;
  const auto h = random_tensor(3, 2, 3, 3);
  const auto out = attention_global(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = mean(h.plane(c));
    for (double v : out.plane(c)) EXPECT_NEAR(v, m, 1e-14);
  }
}

TEST(AttentionGlobal, TwoTokensByHand) {
  // tokens e0, e1 so that the projections are the hand-set matrices
  LatentTensor h(2, 1, 2);
  h.at(0, 0, 0) = 1.0;
  h.at(1, 0, 1) = 1.0;
  AttentionWeights w{Mat(2, 2), Mat(2, 2), Mat(2, 2)};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      w.wq(i, j) = goldens::kTwoTokenQ[j * 2 + i];
      w.wk(i, j) = goldens::kTwoTokenK[j * 2 + i];
      w.wv(i, j) = goldens::kTwoTokenV[j * 2 + i];
    }
  const auto out = attention_global(h, w);
  for (std::size_t tok = 0; tok < 2; ++tok)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out.at(c, 0, tok), goldens::kTwoTokenOut[tok * 2 + c], 1e-12);
}

TEST(AttentionLocal, WholeGridEqualsGlobalBitwise) {
  const auto w = random_weights(4, 3, 5);
  const auto h = random_tensor(4, 6, 5, 6);
  EXPECT_EQ(attention_local(h, PatchGrid::whole(6, 5), w).storage(), attention_global(h, w).storage());
}

TEST(AttentionLocal, DisjointPatchesIndependent) {
  const auto w = random_weights(2, 2, 7);
  auto a = random_tensor(2, 2, 4, 8);
  auto b = a;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 2; ++y) b.at(c, y, 3) += 5.0;
  const PatchGrid g{2, 2, 2, 2};
  const auto oa = attention_local(a, g, w), ob = attention_local(b, g, w);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) EXPECT_EQ(oa.at(c, y, x), ob.at(c, y, x));
}

TEST(AttentionLocal, FourPatchesByHand) {
  const auto w = random_weights(3, 2, 9);
  const auto h = random_tensor(3, 4, 4, 10);
  LatentTensor expect(3, 4, 4);
  for (std::size_t py = 0; py < 2; ++py)
    for (std::size_t px = 0; px < 2; ++px) {
      std::vector<std::pair<std::size_t, std::size_t>> cells;
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) cells.emplace_back(2 * py + y, 2 * px + x);
      manual_attention(h, w, cells, expect);
    }
  testing_support::expect_near_tensor(attention_local(h, PatchGrid{2, 2, 2, 2}, w), expect, 1e-12);
}

TEST(AttentionLocal, InvalidGridThrows) {
  EXPECT_THROW(attention_local(random_tensor(2, 5, 4, 1), PatchGrid{2, 2, 2, 2}, random_weights(2, 2, 1)),
               std::invalid_argument);
}

TEST(ScaleFuse, EqualInputsCollapse) {
  const auto x = random_tensor(2, 7, 7, 11);
  testing_support::expect_near_tensor(scale_fuse(x, x, FrequencyFilter(1.0)), x, 1e-12);
}

TEST(ScaleFuse, TinySigmaGivesLocal) {
  const auto g = random_tensor(2, 5, 5, 12), l = random_tensor(2, 5, 5, 13);
  testing_support::expect_near_tensor(scale_fuse(g, l, FrequencyFilter(1e-9)), l, 1e-12);
}

TEST(ScaleFuse, TwoPathEvaluation) {
  const auto g = random_tensor(3, 9, 8, 14), l = random_tensor(3, 9, 8, 15);
  const FrequencyFilter f(1.0);
  const auto high = axpby(1.0, g, -1.0, gaussian_lowpass(g, f));
  const auto expect = axpby(1.0, high, 1.0, gaussian_lowpass(l, f));
  testing_support::expect_near_tensor(scale_fuse(g, l, f), expect, 1e-12);
  EXPECT_THROW(scale_fuse(g, random_tensor(3, 9, 7, 1), f), std::invalid_argument);
}

TEST(ScaleFuse, FrequencySplitExact) {
  const auto x = random_tensor(2, 8, 8, 16);
  const FrequencyFilter f(1.5);
  const auto low = gaussian_lowpass(x, f);
  testing_support::expect_near_tensor(axpby(1.0, axpby(1.0, x, -1.0, low), 1.0, low), x, 1e-12);
}

TEST(ScaleFuse, MeanComesFromLocalBranch) {
  const FrequencyFilter f(1.0);
  const auto g = random_tensor(1, 12, 12, 17), l = random_tensor(1, 12, 12, 18);
  const auto fused = scale_fuse(g, l, f);
  EXPECT_NEAR(mean(fused.data()),
              mean(g.data()) - mean(gaussian_lowpass(g, f).data()) + mean(gaussian_lowpass(l, f).data()), 1e-12);
  const auto gb = bordered(24, 8, 19), lb = bordered(24, 8, 20);
  EXPECT_NEAR(mean(scale_fuse(gb, lb, f).data()), mean(lb.data()), 1e-10);
}

TEST(FusionConfig, GridFromLevel) {
  const FusionConfig fc;
  const PatchGrid g = fc.grid(16, 16, 2);
  EXPECT_EQ(g, (PatchGrid{8, 8, 4, 4}));
  EXPECT_EQ(g.count(16, 16), 9u);
  EXPECT_EQ(fc.grid(32, 32, 4).count(32, 32), 49u);
  EXPECT_THROW(fc.grid(10, 16, 4), std::invalid_argument);
}

TEST(ScaleHooks, ModesAndLogging) {
  HookLog log;
  DilationPolicy p;
  p.factor = 2;
  const ScaleHooks hooks(p, FusionConfig{}, 2, 0, 4, &log);
  EXPECT_EQ(hooks.attention_mode("mid"), AttentionMode::fused);
  EXPECT_EQ(ScaleHooks(p, FusionConfig{}, 1, 0, 4).attention_mode("mid"), AttentionMode::global);
  const auto m = TinyUnet::seeded(UnetConfig{}, 1);
  DenoiseHooks dh;
  dh.unet = &hooks;
  const auto out = m.predict(random_tensor(12, 16, 16, 2), 10.0, Conditioning::single(m.prompt_tokens("a")), dh);
  EXPECT_TRUE(out.all_finite());
  const auto ev = log.events();
  ASSERT_EQ(ev.size(), 5u);
  for (const auto& e : ev) {
    EXPECT_EQ(e.dilation, e.block.starts_with("up") ? 1 : 2) << e.block;
    EXPECT_EQ(e.mode, AttentionMode::fused);
  }
}
