#pragma once

// Single-channel image resampling.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tml {

// Align-corners bilinear resize: output (i, j) samples the input at
// (i*(h-1)/(oh-1), j*(w-1)/(ow-1)), so corners map to corners exactly and
// the lerp form a + t*(b-a) preserves constant images bit-for-bit.
inline std::vector<float> resize_bilinear(const std::vector<float>& in, int h,
                                          int w, int oh, int ow) {
  if (h < 1 || w < 1 || oh < 1 || ow < 1)
    throw std::invalid_argument("resize: non-positive dimension");
  if (static_cast<int64_t>(in.size()) != static_cast<int64_t>(h) * w)
    throw std::invalid_argument("resize: input size mismatch");
  std::vector<float> out(static_cast<size_t>(oh) * ow);
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  for (int i = 0; i < oh; ++i) {
    double y = i * sy;
    int y0 = std::min(static_cast<int>(y), h - 1);
    int y1 = std::min(y0 + 1, h - 1);
    float fy = static_cast<float>(y - y0);
    for (int j = 0; j < ow; ++j) {
      double x = j * sx;
      int x0 = std::min(static_cast<int>(x), w - 1);
      int x1 = std::min(x0 + 1, w - 1);
      float fx = static_cast<float>(x - x0);
      float top = in[y0 * w + x0] + fx * (in[y0 * w + x1] - in[y0 * w + x0]);
      float bot = in[y1 * w + x0] + fx * (in[y1 * w + x1] - in[y1 * w + x0]);
      out[static_cast<size_t>(i) * ow + j] = top + fy * (bot - top);
    }
  }
  return out;
}

}  // namespace tml
