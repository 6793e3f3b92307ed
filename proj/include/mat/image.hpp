#pragma once

#include <cstdint>
#include <vector>

#include "mat/common.hpp"

namespace mat {

// Channels-first float image, values in [-1, 1].
struct ImageF {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> data;  // [c][h][w]

  ImageF() = default;
  ImageF(int64_t c, int64_t h, int64_t w)
      : channels(c), height(h), width(w), data(static_cast<size_t>(c * h * w), 0.0f) {}

  float& at(int64_t c, int64_t y, int64_t x) {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
  float at(int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
};

// Per-pixel validity: 1 = visible pixel, 0 = hole.
struct BinaryMask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> valid;

  BinaryMask() = default;
  BinaryMask(int64_t h, int64_t w, uint8_t fill = 1)
      : height(h), width(w), valid(static_cast<size_t>(h * w), fill) {}

  uint8_t& at(int64_t y, int64_t x) { return valid[static_cast<size_t>(y * width + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return valid[static_cast<size_t>(y * width + x)]; }

  int64_t count_valid() const {
    int64_t n = 0;
    for (uint8_t v : valid) n += v;
    return n;
  }

  double hole_ratio() const {
    return 1.0 - static_cast<double>(count_valid()) / static_cast<double>(height * width);
  }
};

}  // namespace mat
