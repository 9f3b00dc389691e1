#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cinescale/rng.hpp"
#include "cinescale/tensor_ops.hpp"
#include "support/goldens.hpp"
#include "support/helpers.hpp"

using namespace cinescale;
using testing_support::filled;
using testing_support::random_tensor;

namespace {

LatentTensor direct_conv(const LatentTensor& x, const ConvKernel& k) {
  LatentTensor out(k.out_channels, x.height(), x.width());
  const long r = static_cast<long>(k.size / 2);
  for (std::size_t o = 0; o < k.out_channels; ++o)
    for (long y = 0; y < static_cast<long>(x.height()); ++y)
      for (long xx = 0; xx < static_cast<long>(x.width()); ++xx) {
        double s = k.bias[o];
        for (std::size_t c = 0; c < k.in_channels; ++c)
          for (long i = 0; i < static_cast<long>(k.size); ++i)
            for (long j = 0; j < static_cast<long>(k.size); ++j) {
              const long sy = y + i - r, sx = xx + j - r;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(x.height()) || sx >= static_cast<long>(x.width()))
                continue;
              s += k.at(o, c, i, j) * x.at(c, sy, sx);
            }
        out.at(o, y, xx) = s;
      }
  return out;
}

ConvKernel random_kernel(std::size_t cout, std::size_t cin, std::size_t k, std::uint64_t seed) {
  ConvKernel kern(cout, cin, k);
  CounterRng rng(seed);
  for (double& v : kern.weights) v = rng.normal();
  for (double& v : kern.bias) v = rng.normal();
  return kern;
}

}  // namespace

TEST(UpsampleBilinear, ConstantStaysConstant) {
  const auto up = upsample_bilinear(filled(2, 3, 5, 3.0), 2);
  EXPECT_EQ(up.height(), 6u);
  EXPECT_EQ(up.width(), 10u);
  for (double v : up.data()) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(UpsampleBilinear, ScaleOneIsIdentity) {
  const auto x = random_tensor(3, 4, 5, 1);
  EXPECT_EQ(upsample_bilinear(x, 1), x);
}

TEST(UpsampleBilinear, SampleCenterAlignment) {
  LatentTensor row(1, 1, 2);
  row.at(0, 0, 1) = 1.0;
  const auto up = upsample_bilinear(row, 2);
  const std::vector<double> expect{0.0, 0.25, 0.75, 1.0};
  ASSERT_EQ(up.width(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(up.at(0, 0, i), expect[i], 1e-15);
}

TEST(UpsampleBilinear, LevelMultipliesAndFramesKept) {
  auto v = LatentTensor::video(2, 3, 4, 4, 2);
  const auto up = upsample_bilinear(v, 2);
  EXPECT_EQ(up.level(), 4);
  EXPECT_EQ(up.frames(), 3u);
  EXPECT_TRUE(up.temporal());
}

TEST(UpsampleBilinear, RejectsNonPositiveScale) {
  EXPECT_THROW(upsample_bilinear(filled(1, 2, 2, 0.0), 0), std::invalid_argument);
  EXPECT_THROW(upsample_bilinear(filled(1, 2, 2, 0.0), -2), std::invalid_argument);
}

TEST(DownsampleArea, InvertsConstantAndHalvesLevel) {
  auto x = filled(1, 4, 4, 2.5);
  x.set_level(4);
  const auto d = downsample_area(x, 2);
  EXPECT_EQ(d.height(), 2u);
  EXPECT_EQ(d.level(), 2);
  for (double v : d.data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(FrequencyFilter, KernelMatchesOracle) {
  const FrequencyFilter f1(1.0);
  ASSERT_EQ(f1.radius(), 3);
  ASSERT_EQ(f1.kernel().size(), std::size(goldens::kGaussSigma1));
  for (std::size_t i = 0; i < f1.kernel().size(); ++i) EXPECT_NEAR(f1.kernel()[i], goldens::kGaussSigma1[i], 1e-15);
  const FrequencyFilter fh(0.5);
  ASSERT_EQ(fh.kernel().size(), std::size(goldens::kGaussSigmaHalf));
  for (std::size_t i = 0; i < fh.kernel().size(); ++i) EXPECT_NEAR(fh.kernel()[i], goldens::kGaussSigmaHalf[i], 1e-15);
}

TEST(FrequencyFilter, SymmetricAndNormalized) {
  for (double sigma : {0.3, 0.5, 1.0, 2.0, 3.7}) {
    const FrequencyFilter f(sigma);
    double sum = 0.0;
    const auto k = f.kernel();
    for (std::size_t i = 0; i < k.size(); ++i) {
      sum += k[i];
      EXPECT_EQ(k[i], k[k.size() - 1 - i]);
    }
    EXPECT_NEAR(sum, 1.0, 1e-15);
    EXPECT_EQ(f.radius(), static_cast<int>(std::ceil(3.0 * sigma)));
  }
}

TEST(FrequencyFilter, RejectsNonPositiveSigma) {
  EXPECT_THROW(FrequencyFilter(0.0), std::invalid_argument);
  EXPECT_THROW(FrequencyFilter(-1.0), std::invalid_argument);
}

TEST(GaussianLowpass, ConstantPreserved) {
  const auto y = gaussian_lowpass(filled(2, 6, 7, -1.25), FrequencyFilter(1.5));
  for (double v : y.data()) EXPECT_NEAR(v, -1.25, 1e-14);
}

TEST(GaussianLowpass, ImpulseGivesOuterProduct) {
  LatentTensor x(1, 15, 15);
  x.at(0, 7, 7) = 1.0;
  const auto y = gaussian_lowpass(x, FrequencyFilter(1.0));
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) {
      const int di = i - 7 + 3, dj = j - 7 + 3;
      const bool inside = di >= 0 && di < 7 && dj >= 0 && dj < 7;
      const double expect = inside ? goldens::kGaussSigma1[di] * goldens::kGaussSigma1[dj] : 0.0;
      EXPECT_NEAR(y.at(0, i, j), expect, 1e-15);
    }
}

TEST(GaussianLowpass, Linear) {
  const auto a = random_tensor(2, 9, 8, 11), b = random_tensor(2, 9, 8, 12);
  const FrequencyFilter f(1.3);
  const auto lhs = gaussian_lowpass(axpby(1.0, a, 1.0, b), f);
  const auto rhs = axpby(1.0, gaussian_lowpass(a, f), 1.0, gaussian_lowpass(b, f));
  testing_support::expect_near_tensor(lhs, rhs, 1e-12);
}

TEST(GaussianLowpass, MeanPreservedWithConstantBorder) {
  // interior random, border frame constant and wider than the kernel radius
  LatentTensor x(1, 24, 24);
  CounterRng rng(5);
  for (std::size_t y = 0; y < 24; ++y)
    for (std::size_t xx = 0; xx < 24; ++xx) {
      const bool interior = y >= 8 && y < 16 && xx >= 8 && xx < 16;
      x.at(0, y, xx) = interior ? rng.normal() : 0.5;
    }
  const auto y = gaussian_lowpass(x, FrequencyFilter(1.0));
  EXPECT_NEAR(mean(y.data()), mean(x.data()), 1e-10);
}

TEST(ConvDilated, MatchesDirectSumAtDilationOne) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    CounterRng shape_rng(1000 + trial);
    const std::size_t cin = 1 + static_cast<std::size_t>(shape_rng.uniform() * 2);
    const std::size_t cout = 1 + static_cast<std::size_t>(shape_rng.uniform() * 2);
    const std::size_t h = 1 + static_cast<std::size_t>(shape_rng.uniform() * 8);
    const std::size_t w = 1 + static_cast<std::size_t>(shape_rng.uniform() * 8);
    const std::size_t k = shape_rng.uniform() < 0.5 ? 1 : 3;
    const auto x = random_tensor(cin, h, w, 2000 + trial);
    const auto kern = random_kernel(cout, cin, k, 3000 + trial);
    testing_support::expect_near_tensor(conv2d_dilated(x, kern, 1), direct_conv(x, kern), 1e-12);
  }
}

TEST(ConvDilated, DeltaKernelIsIdentity) {
  const auto x = random_tensor(2, 7, 6, 8);
  ConvKernel k(2, 2, 3);
  k.at(0, 0, 1, 1) = 1.0;
  k.at(1, 1, 1, 1) = 1.0;
  for (int d : {1, 2, 3, 5}) EXPECT_EQ(conv2d_dilated(x, k, d).storage(), x.storage());
}

TEST(ConvDilated, RampWithDilationTwoMatchesBruteForce) {
  LatentTensor x(1, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) x.data()[i] = static_cast<double>(i);
  ConvKernel k(1, 1, 3);
  std::fill(k.weights.begin(), k.weights.end(), 1.0);
  const auto y = conv2d_dilated(x, k, 2);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(y.data()[i], goldens::kRampConvD2[i]);
}

TEST(ConvDilated, RejectsEvenKernelAndBadDilation) {
  const auto x = random_tensor(1, 4, 4, 1);
  EXPECT_THROW(conv2d_dilated(x, ConvKernel(1, 1, 2), 1), std::invalid_argument);
  EXPECT_THROW(conv2d_dilated(x, ConvKernel(1, 1, 3), 0), std::invalid_argument);
  EXPECT_THROW(conv2d_dilated(x, ConvKernel(1, 2, 3), 1), std::invalid_argument);
}

TEST(Patches, FourDisjointPatches) {
  const auto x = random_tensor(1, 4, 4, 3);
  const PatchGrid g{2, 2, 2, 2};
  const auto p = extract_patches(x, g);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[1].at(0, 0, 0), x.at(0, 0, 2));
  EXPECT_EQ(p[2].at(0, 0, 0), x.at(0, 2, 0));
  EXPECT_EQ(reconstruct_patches(p, g, x).storage(), x.storage());
}

TEST(Patches, WholeWindowIsSinglePatch) {
  const auto x = random_tensor(2, 5, 3, 4);
  const auto p = extract_patches(x, PatchGrid::whole(5, 3));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], x);
}

TEST(Patches, OverlappingStrideOneCount) {
  const PatchGrid g{2, 2, 1, 1};
  EXPECT_EQ(g.rows(4), 3u);
  EXPECT_EQ(g.count(4, 4), 9u);
  EXPECT_EQ(extract_patches(random_tensor(1, 4, 4, 1), g).size(), 9u);
}

TEST(Patches, NonDivisibleGeometryNamesAxis) {
  const auto x = random_tensor(1, 5, 4, 1);
  try {
    extract_patches(x, PatchGrid{2, 2, 2, 2});
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }
  try {
    extract_patches(random_tensor(1, 4, 5, 1), PatchGrid{2, 2, 2, 2});
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
}

TEST(Patches, ConstantOverlapsAverageToConstant) {
  const PatchGrid g{3, 3, 1, 2};
  const LatentTensor shape(1, 6, 5);
  std::vector<LatentTensor> patches(g.count(6, 5), filled(1, 3, 3, 5.0));
  const auto y = reconstruct_patches(patches, g, shape);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(Patches, OverlapMeanOneDimensional) {
  const PatchGrid g{1, 2, 1, 1};
  const LatentTensor shape(1, 1, 3);
  std::vector<LatentTensor> patches{filled(1, 1, 2, 1.0), filled(1, 1, 2, 3.0)};
  const auto y = reconstruct_patches(patches, g, shape);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1), 2.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 2), 3.0);
}

TEST(Patches, LengthMismatchThrows) {
  const PatchGrid g{2, 2, 2, 2};
  std::vector<LatentTensor> patches(3, filled(1, 2, 2, 0.0));
  EXPECT_THROW(reconstruct_patches(patches, g, LatentTensor(1, 4, 4)), std::invalid_argument);
}

TEST(Patches, RoundTripWhenStrideEqualsWindow) {
  for (auto [h, w, wh, ww] : std::vector<std::array<std::size_t, 4>>{{6, 6, 3, 2}, {8, 4, 4, 4}, {5, 7, 5, 1}}) {
    const auto x = random_tensor(2, h, w, h * 31 + w);
    const PatchGrid g{wh, ww, wh, ww};
    EXPECT_EQ(reconstruct_patches(extract_patches(x, g), g, x).storage(), x.storage());
  }
}

TEST(Softmax, SymmetricScores) {
  const std::vector<double> s{0.0, 0.0};
  const auto p = softmax_scaled(s, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, HighTemperatureIsUniform) {
  const std::vector<double> s{3.0, -7.0, 12.0, 0.5};
  for (double v : softmax_scaled(s, 1e6, 1.0)) EXPECT_NEAR(v, 0.25, 1e-5);
}

TEST(Softmax, ClosedForm) {
  const std::vector<double> s{std::log(3.0), 0.0};
  const auto p = softmax_scaled(s, 1.0, 1.0);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  CounterRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(9), shifted(9);
    const double c = 100.0 * rng.normal();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = 5.0 * rng.normal();
      shifted[i] = s[i] + c;
    }
    const double t = 0.5 + rng.uniform(), d = 1.0 + 10.0 * rng.uniform();
    const auto p = softmax_scaled(s, t, d), q = softmax_scaled(shifted, t, d);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      EXPECT_NEAR(p[i], q[i], 1e-12);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  const std::vector<double> s{1.0, 2.0};
  EXPECT_THROW(softmax_scaled(s, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(softmax_scaled(s, -1.0, 1.0), std::invalid_argument);
}

TEST(CounterRng, MatchesOracleDraws) {
  EXPECT_EQ(mix64(0), goldens::kMix64Of0);
  EXPECT_EQ(mix64(42), goldens::kMix64Of42);
  for (std::uint64_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(CounterRng::normal_at(42, i), goldens::kNormalSeed42[i], 1e-15);
    EXPECT_NEAR(CounterRng::uniform_at(7, i), goldens::kUniformSeed7[i], 1e-16);
  }
}
