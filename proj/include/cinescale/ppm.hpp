#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cinescale/checkpoint.hpp"
#include "cinescale/tensor.hpp"

namespace cinescale {

/// Affine map from decoded values to 8-bit samples: round((v + offset) * scale),
/// clamped to [0, 255].
struct RgbMapping {
  double offset = 1.0;
  double scale = 127.5;

  std::uint8_t to_byte(double v) const {
    const double s = std::round((v + offset) * scale);
    return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
  }
  double from_byte(std::uint8_t b) const { return static_cast<double>(b) / scale - offset; }
};

/// Binary PPM (P6, maxval 255) of frame `f` of a 3-channel tensor.
inline std::string encode_ppm(const LatentTensor& rgb, std::size_t frame = 0, const RgbMapping& m = {}) {
  if (rgb.channels() != 3) throw std::invalid_argument("encode_ppm: need 3 channels, got " + rgb.shape_string());
  if (frame >= rgb.frames()) throw std::invalid_argument("encode_ppm: frame out of range");
  std::string out = "P6\n" + std::to_string(rgb.width()) + " " + std::to_string(rgb.height()) + "\n255\n";
  out.reserve(out.size() + 3 * rgb.plane_size());
  for (std::size_t y = 0; y < rgb.height(); ++y)
    for (std::size_t x = 0; x < rgb.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(m.to_byte(rgb.at(c, frame, y, x))));
  return out;
}

inline void write_ppm(const std::string& path, const LatentTensor& rgb, std::size_t frame = 0,
                      const RgbMapping& m = {}) {
  write_file(path, encode_ppm(rgb, frame, m));
}

/// Parses P6 with maxval 255 (comments allowed in the header).
inline LatentTensor decode_ppm(const std::string& bytes, const RgbMapping& m = {}) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw std::invalid_argument("PPM: malformed header");
    return std::stoul(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes.compare(0, 2, "P6") != 0) throw std::invalid_argument("PPM: missing P6 magic");
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (maxval != 255) throw std::invalid_argument("PPM: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw std::invalid_argument("PPM: malformed header");
  ++pos;
  if (w == 0 || h == 0) throw std::invalid_argument("PPM: empty image");
  if (bytes.size() - pos < 3 * w * h) throw std::invalid_argument("PPM: truncated pixel data");
  LatentTensor rgb(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        rgb.at(c, y, x) = m.from_byte(static_cast<std::uint8_t>(bytes[pos + 3 * (y * w + x) + c]));
  return rgb;
}

inline LatentTensor read_ppm(const std::string& path, const RgbMapping& m = {}) {
  return decode_ppm(read_file(path), m);
}

}  // namespace cinescale
