#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cinescale {

/// Raised when a computation produces NaN/Inf or otherwise cannot continue.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense [C, (F,) H, W] array of doubles carrying a resolution level.
///
/// Images have no frame axis (`temporal() == false`, `frames() == 1`); videos
/// store frames between channels and rows. Storage is channel-major, so plane
/// `c * frames() + f` is one contiguous H x W slice.
class LatentTensor {
 public:
  LatentTensor() = default;

  LatentTensor(std::size_t channels, std::size_t height, std::size_t width, int level = 1)
      : LatentTensor(channels, 1, height, width, false, level) {}

  static LatentTensor video(std::size_t channels, std::size_t frames, std::size_t height,
                            std::size_t width, int level = 1) {
    return LatentTensor(channels, frames, height, width, true, level);
  }

  /// Zero tensor with the same shape and level as `other`.
  static LatentTensor zeros_like(const LatentTensor& other) {
    return LatentTensor(other.channels_, other.frames_, other.height_, other.width_,
                        other.temporal_, other.level_);
  }

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool temporal() const { return temporal_; }
  int level() const { return level_; }
  void set_level(int level) {
    if (level < 1) throw std::invalid_argument("level must be >= 1");
    level_ = level;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t planes() const { return channels_ * frames_; }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<double> plane(std::size_t p) { return {data_.data() + p * plane_size(), plane_size()}; }
  std::span<const double> plane(std::size_t p) const {
    return {data_.data() + p * plane_size(), plane_size()};
  }

  double& at(std::size_t c, std::size_t f, std::size_t y, std::size_t x) {
    return data_[((c * frames_ + f) * height_ + y) * width_ + x];
  }
  double at(std::size_t c, std::size_t f, std::size_t y, std::size_t x) const {
    return data_[((c * frames_ + f) * height_ + y) * width_ + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return at(c, 0, y, x); }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return at(c, 0, y, x); }

  /// Same axes and extents (level is not compared).
  bool same_shape(const LatentTensor& o) const {
    return channels_ == o.channels_ && frames_ == o.frames_ && height_ == o.height_ &&
           width_ == o.width_ && temporal_ == o.temporal_;
  }

  /// Same extents but a different spatial size; frames/channels preserved.
  LatentTensor resized(std::size_t height, std::size_t width, int level) const {
    return LatentTensor(channels_, frames_, height, width, temporal_, level);
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[' << channels_;
    if (temporal_) os << ", " << frames_;
    os << ", " << height_ << ", " << width_ << ']';
    return os.str();
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const LatentTensor& o) const {
    return same_shape(o) && level_ == o.level_ && data_ == o.data_;
  }

 private:
  LatentTensor(std::size_t c, std::size_t f, std::size_t h, std::size_t w, bool temporal, int level)
      : channels_(c), frames_(f), height_(h), width_(w), temporal_(temporal), level_(level),
        data_(c * f * h * w, 0.0) {
    if (c == 0 || f == 0 || h == 0 || w == 0)
      throw std::invalid_argument("tensor extents must be positive");
    if (level < 1) throw std::invalid_argument("level must be >= 1");
  }

  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  bool temporal_ = false;
  int level_ = 1;
  std::vector<double> data_;
};

inline void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
}

inline void require_finite(const LatentTensor& x, const char* what) {
  if (!x.all_finite()) throw NumericalError(std::string(what) + ": non-finite value in output");
}

/// a*x + b*y, elementwise.
inline LatentTensor axpby(double a, const LatentTensor& x, double b, const LatentTensor& y) {
  require_same_shape(x, y, "axpby");
  LatentTensor out = LatentTensor::zeros_like(x);
  auto o = out.data();
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xs[i] + b * ys[i];
  return out;
}

inline double max_abs_diff(const LatentTensor& a, const LatentTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace cinescale
