#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "cinescale/tensor.hpp"

namespace cinescale {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over the bytes of a string.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based Gaussian generator ("SplitMix counter + Box-Muller").
///
/// Draw i is a pure function of (seed, i): uniform(seed, k) hashes the
/// counter k with mix64 and keeps the top 53 bits, shifted by half an ulp so
/// the value lies strictly inside (0, 1). normal draw i uses counters 2i and
/// 2i+1 and the cosine branch of Box-Muller. No state beyond the counter, so
/// sequences are reproducible independent of threading.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static double uniform_at(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t bits = mix64(seed ^ mix64(counter));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  static double normal_at(std::uint64_t seed, std::uint64_t index) {
    const double u1 = uniform_at(seed, 2 * index);
    const double u2 = uniform_at(seed, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double uniform() { return uniform_at(seed_, counter_++); }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_at(seed_, normal_counter_++); }

  void fill_normal(LatentTensor& t) {
    for (double& v : t.data()) v = normal();
  }

  /// Independent child stream keyed by a tag.
  CounterRng derive(std::uint64_t tag) const { return CounterRng(mix64(seed_ ^ mix64(tag ^ 0xa5a5a5a5ULL))); }
  CounterRng derive(std::string_view tag) const { return derive(fnv1a64(tag)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::uint64_t normal_counter_ = 0;
};

inline LatentTensor normal_like(const LatentTensor& shape, std::uint64_t seed) {
  LatentTensor out = LatentTensor::zeros_like(shape);
  CounterRng rng(seed);
  rng.fill_normal(out);
  return out;
}

}  // namespace cinescale
