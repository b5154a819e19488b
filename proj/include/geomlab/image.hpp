#pragma once

#include <string>
#include <vector>

#include "geomlab/common.hpp"

namespace geomlab {

// Grayscale image, float values in [0,1], row-major.
struct Image {
  int w = 0, h = 0;
  std::vector<float> px;

  Image() = default;
  Image(int width, int height, float fill = 0.0f)
      : w(width), h(height), px(static_cast<size_t>(width) * height, fill) {}

  float& at(int x, int y) { return px[static_cast<size_t>(y) * w + x]; }
  float at(int x, int y) const { return px[static_cast<size_t>(y) * w + x]; }

  bool same_size(const Image& o) const { return w == o.w && h == o.h; }

  void clamp01() {
    for (float& v : px) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
};

// Binary PGM (P5, maxval 255). Round trips are byte-stable after the first
// quantization.
void save_pgm(const Image& img, const std::string& path);
Image load_pgm(const std::string& path);

}  // namespace geomlab
