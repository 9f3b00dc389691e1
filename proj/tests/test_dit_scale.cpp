#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cinescale/dit.hpp"
#include "cinescale/rope.hpp"
#include "support/goldens.hpp"
#include "support/helpers.hpp"

using namespace cinescale;

namespace {

std::vector<double> random_vec(std::size_t n, CounterRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(RopeAngles, ZeroPositionIsZero) {
  for (double a : rope_angles(0.0, 10000.0, 3.0, 8)) EXPECT_EQ(a, 0.0);
}

TEST(RopeAngles, UnitLambdaIsBaseline) {
  const auto a = rope_angles(5.0, 10000.0, 1.0, 16);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_DOUBLE_EQ(a[j], 5.0 / std::pow(10000.0, 2.0 * j / 16.0));
}

TEST(RopeAngles, HandValues) {
  const auto a = rope_angles(1.0, 10000.0, 1.0, 4);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_NEAR(a[1], 0.01, 1e-17);
}

TEST(RopeAngles, OddDimensionThrows) { EXPECT_THROW(rope_angles(1.0, 10000.0, 1.0, 5), std::invalid_argument); }

TEST(ApplyRope, ZeroAnglesIdentity) {
  const std::vector<double> v{1.0, -2.0, 3.0, 0.5};
  const std::vector<double> z(2, 0.0);
  EXPECT_EQ(apply_rope(v, z), v);
}

TEST(ApplyRope, NormPreserving) {
  CounterRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto v = random_vec(16, rng);
    const auto a = rope_angles(1000.0 * rng.uniform(), 10000.0, 1.0 + 3.0 * rng.uniform(), 16);
    const auto r = apply_rope(v, a);
    EXPECT_NEAR(std::sqrt(dot(r, r)), std::sqrt(dot(v, v)), 1e-12);
  }
}

TEST(ApplyRope, RelativePositionIdentity) {
  CounterRng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto q = random_vec(8, rng), k = random_vec(8, rng);
    const double m = std::floor(50 * rng.uniform()), n = std::floor(50 * rng.uniform());
    const double s = std::floor(200 * rng.uniform());
    const double lam = 1.0 + rng.uniform();
    auto ang = [&](double p) { return rope_angles(p, 10000.0, lam, 8); };
    EXPECT_NEAR(dot(apply_rope(q, ang(m)), apply_rope(k, ang(n))), dot(apply_rope(q, ang(m + s)), apply_rope(k, ang(n + s))),
                1e-10);
  }
}

TEST(ApplyRope, LengthMismatchThrows) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> a{0.1};
  EXPECT_THROW(apply_rope(v, a), std::invalid_argument);
}

TEST(NtkLambda, Values) {
  EXPECT_EQ(ntk_lambda(256, 256, 64), 1.0);
  EXPECT_NEAR(ntk_lambda(256, 1024, 64), goldens::kNtkLambda256to1024d64, 1e-12);
  EXPECT_NEAR(ntk_lambda(256, 1024, 64), 4.1830, 1e-4);
  EXPECT_EQ(ntk_lambda(1024, 256, 64), 1.0);
  EXPECT_THROW(ntk_lambda(1, 2, 2), std::invalid_argument);
}

TEST(AttentionTemperature, Values) {
  EXPECT_EQ(attention_temperature(1024, 1024), 1.0);
  EXPECT_NEAR(attention_temperature(1024, 4096), goldens::kTemperature1024to4096, 1e-14);
  EXPECT_EQ(attention_temperature(4096, 1024), 1.0);
  EXPECT_THROW(attention_temperature(1, 4), std::invalid_argument);
}

TEST(ScaleDefaults, MonotoneInTarget) {
  double prev_l = 0.0, prev_t = 0.0;
  for (double target = 16; target <= 16384; target *= 1.37) {
    const double l = ntk_lambda(256, target, 64), t = attention_temperature(256, target);
    EXPECT_GE(l, prev_l);
    EXPECT_GE(t, prev_t);
    prev_l = l;
    prev_t = t;
  }
}

TEST(ScaleDefaults, LowestBandAngleStaysWithinTrainingRange) {
  const std::size_t d = 64;
  for (double train : {64.0, 256.0}) {
    for (double ratio : {2.0, 4.0, 8.0}) {
      const double target = train * ratio;
      const double lam = ntk_lambda(train, target, d);
      const double train_max = rope_angles(train, 10000.0, 1.0, d).back();
      const double scaled_max = rope_angles(target, 10000.0, lam, d).back();
      EXPECT_LE(scaled_max, train_max * (1.0 + 1e-12)) << train << " x" << ratio;
      const double plain_max = rope_angles(target, 10000.0, 1.0, d).back();
      EXPECT_GT(plain_max, train_max);
    }
  }
}

TEST(RopeConfig, PerAxisNtk) {
  RopeConfig r;
  r.train_extent = {4, 8, 8};
  r.target_extent = {4, 16, 32};
  const RopeConfig n = r.with_ntk();
  EXPECT_EQ(n.lambda[0], 1.0);
  EXPECT_NEAR(n.lambda[1], ntk_lambda(8, 16, 6), 1e-15);
  EXPECT_NEAR(n.lambda[2], ntk_lambda(8, 32, 6), 1e-15);
  r.target_extent = {4, 4, 8};
  EXPECT_EQ(r.with_ntk().lambda, (std::array<double, 3>{1.0, 1.0, 1.0}));
}

TEST(RopeConfig, Validation) {
  RopeConfig r;
  EXPECT_NO_THROW(r.validate(16));
  EXPECT_THROW(r.validate(18), std::invalid_argument);
  r.axis_dims = {4, 5, 7};
  EXPECT_THROW(r.validate(16), std::invalid_argument);
}

TEST(DitScale, TranslationOfCoordinatesWithNtk) {
  DitConfig cfg;
  cfg.train_extent = {1, 4, 4};
  const auto m = TinyDit::seeded(cfg, 3);
  const auto z = testing_support::random_tensor(12, 16, 16, 4);
  RopeConfig r = cfg.default_rope();
  r.target_extent = {1, 8, 8};
  r = r.with_ntk();
  const auto cond = Conditioning::single(m.prompt_tokens("a"));
  DenoiseHooks shifted;
  shifted.dit.position_offset = {0.0, 11.0, -4.0};
  testing_support::expect_near_tensor(dit_predict(m, z, 9.0, cond, r, 1.2),
                                      dit_predict(m, z, 9.0, cond, r, 1.2, shifted), 1e-8);
}

TEST(DitScale, TemperatureChangesOutput) {
  DitConfig cfg;
  cfg.train_extent = {1, 4, 4};
  const auto m = TinyDit::seeded(cfg, 5);
  const auto z = testing_support::random_tensor(12, 8, 8, 6);
  const auto cond = Conditioning::single(m.prompt_tokens("a"));
  EXPECT_NE(dit_predict(m, z, 9.0, cond, cfg.default_rope(), 1.0).storage(),
            dit_predict(m, z, 9.0, cond, cfg.default_rope(), 1.5).storage());
}
