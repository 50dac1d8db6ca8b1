#pragma once

// Synthetic MNIST-style digit renderer. Emits 28x28 u8 images of the digits
// 0, 1, 8 (and 3 as an extra class) as bright anti-aliased strokes on a dark
// background, with jittered pose, scale, and brightness. Digit topology is
// controlled: 0 encloses one dark region, 8 encloses two, 1 and 3 none.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tmlkit/dataset.hpp"
#include "tmlkit/rng.hpp"

namespace tml {

namespace detail {

struct Pose {
  double cx, cy, cos_t, sin_t, scale, brightness;
};

inline double coverage(double sd) {
  // Signed distance (px) to stroke edge -> intensity in [0,1], ~1.1px feather.
  double v = 0.5 - sd / 1.1;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

inline double ring_sd(double x, double y, double rx, double ry, double width) {
  double r = std::sqrt((x / rx) * (x / rx) + (y / ry) * (y / ry));
  return (std::abs(r - 1.0) * std::min(rx, ry)) - width * 0.5;
}

inline double segment_sd(double x, double y, double x0, double y0, double x1,
                         double y1, double width) {
  double dx = x1 - x0, dy = y1 - y0;
  double t = ((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy);
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  double px = x - (x0 + t * dx), py = y - (y0 + t * dy);
  return std::sqrt(px * px + py * py) - width * 0.5;
}

inline double digit_intensity(int digit, double x, double y, double s) {
  switch (digit) {
    case 0:
      return coverage(ring_sd(x, y, 5.3 * s, 7.3 * s, 2.4));
    case 1:
      return coverage(segment_sd(x, y, 0.4, -7.6 * s, -0.4, 7.6 * s, 2.6));
    case 8: {
      double top = ring_sd(x, y + 4.1 * s, 3.3 * s, 3.5 * s, 2.2);
      double bot = ring_sd(x, y - 4.4 * s, 3.7 * s, 3.9 * s, 2.2);
      return std::max(coverage(top), coverage(bot));
    }
    case 3: {
      // Two stacked arcs, open to the left; no enclosed region.
      double v = 0.0;
      for (double oy : {4.0 * s, -4.0 * s}) {
        double dx = x, dy = y + oy;
        if (dx > -0.25 * std::abs(dy) - 0.6)  // keep the right-facing part
          v = std::max(v, coverage(ring_sd(dx, dy, 3.6 * s, 3.6 * s, 2.2)));
      }
      return v;
    }
    default:
      return 0.0;
  }
}

}  // namespace detail

inline std::vector<uint8_t> render_synth_digit(int digit, Rng& rng) {
  detail::Pose pose;
  pose.cx = 13.5 + rng.uniform(-1.5, 1.5);
  pose.cy = 13.5 + rng.uniform(-1.5, 1.5);
  double theta = rng.uniform(-0.18, 0.18);
  pose.cos_t = std::cos(theta);
  pose.sin_t = std::sin(theta);
  pose.scale = rng.uniform(0.85, 1.1);
  pose.brightness = rng.uniform(0.62, 1.0);

  std::vector<uint8_t> img(28 * 28);
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) {
      double px = c - pose.cx, py = r - pose.cy;
      double x = pose.cos_t * px + pose.sin_t * py;
      double y = -pose.sin_t * px + pose.cos_t * py;
      double v = pose.brightness *
                 detail::digit_intensity(digit, x, y, pose.scale);
      v += rng.normal() * 0.015;
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      img[r * 28 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

// Mix: digits 0, 1, 8 at 30% each, digit 3 at 10% (an off-target class that
// downstream filtering removes).
inline int sample_synth_label(Rng& rng) {
  switch (rng.below(10)) {
    case 0: case 1: case 2: return 0;
    case 3: case 4: case 5: return 1;
    case 6: case 7: case 8: return 8;
    default: return 3;
  }
}

// Writes a split in canonical MNIST IDX naming under dir.
inline void write_synth_split(const std::string& dir, const std::string& stem,
                              int count, uint64_t seed) {
  Rng rng(seed);
  std::vector<uint8_t> pixels, labels;
  pixels.reserve(static_cast<size_t>(count) * 28 * 28);
  labels.reserve(count);
  for (int i = 0; i < count; ++i) {
    int digit = sample_synth_label(rng);
    auto img = render_synth_digit(digit, rng);
    pixels.insert(pixels.end(), img.begin(), img.end());
    labels.push_back(static_cast<uint8_t>(digit));
  }
  write_idx_images(dir + "/" + stem + "-images-idx3-ubyte", pixels, count, 28,
                   28);
  write_idx_labels(dir + "/" + stem + "-labels-idx1-ubyte", labels);
}

inline void generate_synth_digits(const std::string& dir, int train_count,
                                  int test_count, uint64_t seed) {
  write_synth_split(dir, "train", train_count, mix_seed(seed, 1));
  write_synth_split(dir, "t10k", test_count, mix_seed(seed, 2));
}

}  // namespace tml
