#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "cinescale/rng.hpp"
#include "cinescale/tensor.hpp"

namespace testing_support {

inline cinescale::LatentTensor random_tensor(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  cinescale::LatentTensor t(c, h, w);
  cinescale::CounterRng rng(seed);
  rng.fill_normal(t);
  return t;
}

inline cinescale::LatentTensor random_video(std::size_t c, std::size_t f, std::size_t h, std::size_t w,
                                            std::uint64_t seed) {
  auto t = cinescale::LatentTensor::video(c, f, h, w);
  cinescale::CounterRng rng(seed);
  rng.fill_normal(t);
  return t;
}

inline cinescale::LatentTensor filled(std::size_t c, std::size_t h, std::size_t w, double v) {
  cinescale::LatentTensor t(c, h, w);
  for (double& x : t.data()) x = v;
  return t;
}

inline void expect_near_tensor(const cinescale::LatentTensor& a, const cinescale::LatentTensor& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_string() << " vs " << b.shape_string();
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a.data()[i], b.data()[i], tol) << "at flat index " << i;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("cinescale_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
