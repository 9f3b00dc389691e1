#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <oneapi/tbb/global_control.h>
#include <oneapi/tbb/parallel_for.h>

namespace cinescale {

namespace detail {
struct ThreadSetting {
  std::mutex mu;
  int threads = 1;
  std::unique_ptr<oneapi::tbb::global_control> control;
};
inline ThreadSetting& thread_setting() {
  static ThreadSetting s;
  return s;
}
}  // namespace detail

/// Worker count used by parallel_for. Results never depend on it: every
/// parallel loop writes disjoint outputs whose arithmetic is fixed per index.
inline void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  auto& s = detail::thread_setting();
  std::lock_guard lock(s.mu);
  s.threads = n;
  s.control = std::make_unique<oneapi::tbb::global_control>(
      oneapi::tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(n));
}

inline int num_threads() {
  auto& s = detail::thread_setting();
  std::lock_guard lock(s.mu);
  return s.threads;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  if (num_threads() == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  oneapi::tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { fn(i); });
}

}  // namespace cinescale
