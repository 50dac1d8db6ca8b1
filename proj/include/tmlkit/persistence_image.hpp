#pragma once

// Persistence images: diagrams mapped to (birth, persistence) coordinates,
// splatted onto a fixed grid with exact per-pixel Gaussian mass and a
// persistence-power weight.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/cubical.hpp"

namespace tml {

struct PIParams {
  int res_h = 28, res_w = 28;
  double sigma = 0.003;
  double weight_power = 3.0;
  double birth_lo = 0.0, birth_hi = 1.0;
  double pers_lo = 0.0, pers_hi = 1.0;
  double essential_death = 1.0;  // finite death substituted for infinities

  void validate() const {
    if (res_h < 1 || res_w < 1)
      throw std::invalid_argument("pi params: non-positive resolution");
    if (!(sigma > 0))
      throw std::invalid_argument("pi params: sigma must be positive");
    if (!(birth_hi > birth_lo) || !(pers_hi > pers_lo))
      throw std::invalid_argument("pi params: degenerate range");
  }

  bool operator==(const PIParams&) const = default;
};

struct PersistenceImage {
  int res_h = 0, res_w = 0;
  int channels = 0;
  std::vector<float> data;  // [channel][row][col], row 0 = lowest persistence
  std::vector<std::string> semantics;
};

inline PersistenceDiagram finitize(PersistenceDiagram diagram, double death) {
  for (auto& p : diagram.points)
    if (std::isinf(p.death)) p.death = static_cast<float>(death);
  return diagram;
}

// Grid over [birth_lo, birth_hi] x [pers_lo, pers_hi]; cell (i, j) covers
// persistence row i and birth column j. Each diagram point contributes
// weight x the exact Gaussian mass inside the cell rectangle, computed as a
// product of 1-d CDF differences.
inline std::vector<float> diagram_to_pi(const PersistenceDiagram& diagram,
                                        int dim, const PIParams& params) {
  params.validate();
  std::vector<float> grid(static_cast<size_t>(params.res_h) * params.res_w,
                          0.f);
  const double dx = (params.birth_hi - params.birth_lo) / params.res_w;
  const double dy = (params.pers_hi - params.pers_lo) / params.res_h;
  const double inv_s = 1.0 / (params.sigma * std::sqrt(2.0));
  std::vector<double> mass_x(params.res_w), mass_y(params.res_h);

  for (const auto& p : diagram.points) {
    if (p.dim != dim) continue;
    if (std::isinf(p.death))
      throw std::invalid_argument(
          "persistence image: infinite death point; finitize the diagram "
          "first");
    const double birth = p.birth;
    const double pers = static_cast<double>(p.death) - p.birth;
    double w = pers / params.pers_hi;
    w = std::pow(std::clamp(w, 0.0, 1.0), params.weight_power);
    if (w == 0.0) continue;

    double prev = 0.5 * std::erfc(-(params.birth_lo - birth) * inv_s);
    for (int j = 0; j < params.res_w; ++j) {
      double edge =
          0.5 * std::erfc(-(params.birth_lo + (j + 1) * dx - birth) * inv_s);
      mass_x[j] = edge - prev;
      prev = edge;
    }
    prev = 0.5 * std::erfc(-(params.pers_lo - pers) * inv_s);
    for (int i = 0; i < params.res_h; ++i) {
      double edge =
          0.5 * std::erfc(-(params.pers_lo + (i + 1) * dy - pers) * inv_s);
      mass_y[i] = edge - prev;
      prev = edge;
    }
    for (int i = 0; i < params.res_h; ++i) {
      const double wy = w * mass_y[i];
      if (wy == 0.0) continue;
      float* row = grid.data() + static_cast<size_t>(i) * params.res_w;
      for (int j = 0; j < params.res_w; ++j)
        row[j] += static_cast<float>(wy * mass_x[j]);
    }
  }
  return grid;
}

// Channel-planar image, C in {1, 3}, values in [0, 1]. Each channel yields
// an H0 and an H1 persistence image; channels stay in input order.
inline PersistenceImage image_to_pi_stack(const std::vector<float>& image,
                                          int channels, int height, int width,
                                          const PIParams& params) {
  params.validate();
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("pi stack: expected 1 or 3 channels, got " +
                                std::to_string(channels));
  if (static_cast<int64_t>(image.size()) !=
      static_cast<int64_t>(channels) * height * width)
    throw std::invalid_argument("pi stack: image size mismatch");

  static const char* gray_names[] = {"H0", "H1"};
  static const char* rgb_names[] = {"R-H0", "R-H1", "G-H0",
                                    "G-H1", "B-H0", "B-H1"};
  PersistenceImage out;
  out.res_h = params.res_h;
  out.res_w = params.res_w;
  out.channels = 2 * channels;
  out.data.reserve(static_cast<size_t>(out.channels) * params.res_h *
                   params.res_w);
  for (int c = 0; c < channels; ++c) {
    std::vector<float> plane(image.begin() + static_cast<size_t>(c) * height * width,
                             image.begin() + static_cast<size_t>(c + 1) * height * width);
    auto diagram = finitize(
        compute_persistence(build_lower_star(plane, height, width)),
        params.essential_death);
    for (int dim = 0; dim < 2; ++dim) {
      auto grid = diagram_to_pi(diagram, dim, params);
      out.data.insert(out.data.end(), grid.begin(), grid.end());
      out.semantics.push_back(channels == 1 ? gray_names[dim]
                                            : rgb_names[2 * c + dim]);
    }
  }
  return out;
}

}  // namespace tml
