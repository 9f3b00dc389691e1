#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cinescale/linalg.hpp"
#include "cinescale/rng.hpp"

namespace cinescale {

/// Binary mask over a latent grid.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), cells(h * w, 0) {}

  /// Cells with y0 <= y < y1 and x0 <= x < x1 set.
  static Mask rect(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
    if (y0 > y1 || x0 > x1 || y1 > h || x1 > w) throw std::invalid_argument("Mask::rect: rectangle out of bounds");
    Mask m(h, w);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) m.cells[y * w + x] = 1;
    return m;
  }

  bool at(std::size_t y, std::size_t x) const { return cells[y * width + x] != 0; }
  bool any() const {
    for (auto c : cells)
      if (c) return true;
    return false;
  }

  /// Nearest-neighbour resample: target cell (y, x) reads source (y*h/h2, x*w/w2).
  Mask resample_nearest(std::size_t h2, std::size_t w2) const {
    if (h2 == height && w2 == width) return *this;
    Mask out(h2, w2);
    for (std::size_t y = 0; y < h2; ++y)
      for (std::size_t x = 0; x < w2; ++x) out.cells[y * w2 + x] = cells[(y * height / h2) * width + x * width / w2];
    return out;
  }

  bool operator==(const Mask&) const = default;
};

/// Per-cell index into a list of condition-token sets (0 = global prompt).
struct ConditionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::size_t> index;

  bool empty() const { return index.empty(); }

  /// Selector resampled (nearest) to an h2 x w2 attention map, flattened row-major.
  std::vector<std::size_t> resample(std::size_t h2, std::size_t w2) const {
    if (empty()) return {};
    std::vector<std::size_t> out(h2 * w2);
    for (std::size_t y = 0; y < h2; ++y)
      for (std::size_t x = 0; x < w2; ++x) out[y * w2 + x] = index[(y * height / h2) * width + x * width / w2];
    return out;
  }
};

/// Cross-attention context: token sets plus an optional spatial selector.
struct Conditioning {
  std::vector<Mat> sets;
  ConditionMap selector;

  static Conditioning single(Mat tokens) {
    Conditioning c;
    c.sets.push_back(std::move(tokens));
    return c;
  }
};

/// Prompt tokens drawn from a seeded embedding table keyed by the prompt hash.
struct PromptTable {
  static constexpr std::size_t kRows = 256;
  static constexpr std::size_t kTokens = 4;

  Mat table;  // kRows x dim

  static PromptTable seeded(std::size_t dim, std::uint64_t seed) {
    PromptTable p;
    p.table = Mat(kRows, dim);
    CounterRng rng(seed);
    for (double& v : p.table.data) v = rng.normal();
    return p;
  }

  /// Four tokens: row i of the result is table[(hash >> 8i) & 0xff].
  Mat tokens(std::string_view prompt) const {
    const std::uint64_t h = fnv1a64(prompt);
    Mat out(kTokens, table.cols);
    for (std::size_t i = 0; i < kTokens; ++i) {
      const std::size_t r = (h >> (8 * i)) & 0xff;
      for (std::size_t c = 0; c < table.cols; ++c) out(i, c) = table(r, c);
    }
    return out;
  }
};

}  // namespace cinescale
