#pragma once

// Lower-star filtered cubical complexes over images (V-construction:
// pixels are vertices, edges join 4-neighbors, squares fill 2x2 blocks)
// and persistent homology via boundary-matrix reduction over Z/2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tml {

struct Cell {
  int8_t dim = 0;            // 0 vertex, 1 edge, 2 square
  int8_t nverts = 0;
  std::array<int32_t, 4> verts{};  // row-major pixel indices, ascending
  float value = 0.f;         // max over vertex values (lower star)
};

struct FilteredCubicalComplex {
  int height = 0, width = 0;
  std::vector<Cell> cells;   // filtration order: (value, dim, vertex tuple)
  std::vector<std::array<int32_t, 4>> boundary;  // indices into cells; -1 pad
  std::vector<int8_t> boundary_size;
};

inline FilteredCubicalComplex build_lower_star(const std::vector<float>& image,
                                               int height, int width) {
  if (height < 1 || width < 1)
    throw std::invalid_argument("lower star: empty image");
  if (static_cast<int64_t>(image.size()) !=
      static_cast<int64_t>(height) * width)
    throw std::invalid_argument("lower star: image size does not match " +
                                std::to_string(height) + "x" +
                                std::to_string(width));
  for (size_t i = 0; i < image.size(); ++i)
    if (!std::isfinite(image[i]))
      throw std::invalid_argument("lower star: non-finite pixel at index " +
                                  std::to_string(i));

  FilteredCubicalComplex K;
  K.height = height;
  K.width = width;
  auto vid = [width](int r, int c) { return r * width + c; };
  auto vmax = [&](std::initializer_list<int32_t> vs) {
    float m = -std::numeric_limits<float>::infinity();
    for (int32_t v : vs) m = std::max(m, image[v]);
    return m;
  };

  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      int32_t v = vid(r, c);
      K.cells.push_back({0, 1, {v, 0, 0, 0}, image[v]});
    }
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      int32_t v = vid(r, c);
      if (c + 1 < width)
        K.cells.push_back({1, 2, {v, v + 1, 0, 0}, vmax({v, v + 1})});
      if (r + 1 < height)
        K.cells.push_back({1, 2, {v, v + width, 0, 0}, vmax({v, v + width})});
    }
  for (int r = 0; r + 1 < height; ++r)
    for (int c = 0; c + 1 < width; ++c) {
      int32_t v = vid(r, c);
      K.cells.push_back({2, 4,
                         {v, v + 1, v + width, v + width + 1},
                         vmax({v, v + 1, v + width, v + width + 1})});
    }

  std::sort(K.cells.begin(), K.cells.end(), [](const Cell& a, const Cell& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.dim != b.dim) return a.dim < b.dim;
    return a.verts < b.verts;
  });

  // Index cells by (dim, first vertex, second vertex) to wire boundaries.
  auto key = [](int8_t dim, int32_t a, int32_t b) {
    return (static_cast<int64_t>(dim) << 60) |
           (static_cast<int64_t>(a) << 30) | b;
  };
  std::vector<std::pair<int64_t, int32_t>> index;
  index.reserve(K.cells.size());
  for (size_t i = 0; i < K.cells.size(); ++i) {
    const Cell& cell = K.cells[i];
    index.emplace_back(
        key(cell.dim, cell.verts[0], cell.nverts > 1 ? cell.verts[1] : 0),
        static_cast<int32_t>(i));
  }
  std::sort(index.begin(), index.end());
  auto lookup = [&](int8_t dim, int32_t a, int32_t b) {
    auto it = std::lower_bound(
        index.begin(), index.end(),
        std::make_pair(key(dim, a, b), std::numeric_limits<int32_t>::min()));
    return it->second;
  };

  K.boundary.assign(K.cells.size(), {-1, -1, -1, -1});
  K.boundary_size.assign(K.cells.size(), 0);
  for (size_t i = 0; i < K.cells.size(); ++i) {
    const Cell& cell = K.cells[i];
    if (cell.dim == 1) {
      K.boundary[i] = {lookup(0, cell.verts[0], 0), lookup(0, cell.verts[1], 0),
                       -1, -1};
      K.boundary_size[i] = 2;
      std::sort(K.boundary[i].begin(), K.boundary[i].begin() + 2);
    } else if (cell.dim == 2) {
      int32_t v = cell.verts[0];
      int w = width;
      K.boundary[i] = {lookup(1, v, v + 1), lookup(1, v, v + w),
                       lookup(1, v + 1, v + 1 + w), lookup(1, v + w, v + w + 1)};
      K.boundary_size[i] = 4;
      std::sort(K.boundary[i].begin(), K.boundary[i].end());
    }
  }
  return K;
}

struct PDPoint {
  float birth = 0.f, death = 0.f;
  int dim = 0;

  bool operator==(const PDPoint&) const = default;
};

struct PersistenceDiagram {
  std::vector<PDPoint> points;  // sorted by (dim, birth, death)
};

struct ReductionResult {
  std::vector<std::pair<int32_t, int32_t>> pairs;  // (birth cell, death cell)
  std::vector<int32_t> essential;                  // unpaired creator cells
};

namespace detail {

inline void add_column(std::vector<int32_t>& dst,
                       const std::vector<int32_t>& src,
                       std::vector<int32_t>& scratch) {
  // Symmetric difference of two ascending index lists (Z/2 column addition).
  scratch.clear();
  size_t i = 0, j = 0;
  while (i < dst.size() && j < src.size()) {
    if (dst[i] < src[j]) scratch.push_back(dst[i++]);
    else if (src[j] < dst[i]) scratch.push_back(src[j++]);
    else { ++i; ++j; }
  }
  scratch.insert(scratch.end(), dst.begin() + i, dst.end());
  scratch.insert(scratch.end(), src.begin() + j, src.end());
  dst.swap(scratch);
}

inline PersistenceDiagram pairs_to_diagram(const FilteredCubicalComplex& K,
                                           const ReductionResult& red) {
  PersistenceDiagram out;
  for (auto [b, d] : red.pairs) {
    const Cell& bc = K.cells[b];
    const Cell& dc = K.cells[d];
    if (bc.dim > 1) continue;
    if (bc.value == dc.value) continue;  // zero persistence
    out.points.push_back({bc.value, dc.value, bc.dim});
  }
  for (int32_t e : red.essential) {
    const Cell& c = K.cells[e];
    if (c.dim > 1) continue;
    out.points.push_back(
        {c.value, std::numeric_limits<float>::infinity(), c.dim});
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const PDPoint& a, const PDPoint& b) {
              if (a.dim != b.dim) return a.dim < b.dim;
              if (a.birth != b.birth) return a.birth < b.birth;
              return a.death < b.death;
            });
  return out;
}

}  // namespace detail

inline ReductionResult reduce_boundary_matrix(
    const FilteredCubicalComplex& K) {
  const int32_t n = static_cast<int32_t>(K.cells.size());
  std::vector<std::vector<int32_t>> cols(n);
  for (int32_t j = 0; j < n; ++j)
    for (int8_t b = 0; b < K.boundary_size[j]; ++b)
      cols[j].push_back(K.boundary[j][b]);

  ReductionResult out;
  std::vector<int32_t> low_owner(n, -1);
  std::vector<int32_t> scratch;
  for (int32_t j = 0; j < n; ++j) {
    auto& col = cols[j];
    while (!col.empty()) {
      int32_t owner = low_owner[col.back()];
      if (owner < 0) break;
      detail::add_column(col, cols[owner], scratch);
    }
    if (!col.empty()) {
      low_owner[col.back()] = j;
      out.pairs.emplace_back(col.back(), j);
    }
  }
  std::vector<char> killed(n, 0);
  for (auto [b, d] : out.pairs) killed[b] = 1;
  for (int32_t j = 0; j < n; ++j)
    if (cols[j].empty() && !killed[j]) out.essential.push_back(j);
  return out;
}

inline PersistenceDiagram compute_persistence(
    const FilteredCubicalComplex& K) {
  return detail::pairs_to_diagram(K, reduce_boundary_matrix(K));
}

// Textbook O(n^3) reduction on a dense matrix: scan earlier columns for a
// matching pivot, add, repeat. Guarded to small complexes.
inline PersistenceDiagram oracle_persistence(const FilteredCubicalComplex& K) {
  const int32_t n = static_cast<int32_t>(K.cells.size());
  if (n > 500)
    throw std::invalid_argument("oracle persistence: complex has " +
                                std::to_string(n) + " cells, limit is 500");
  std::vector<std::vector<char>> R(n, std::vector<char>(n, 0));
  for (int32_t j = 0; j < n; ++j)
    for (int8_t b = 0; b < K.boundary_size[j]; ++b)
      R[j][K.boundary[j][b]] = 1;

  std::vector<int32_t> lows(n, -1);  // pivot row of each finished column
  ReductionResult red;
  for (int32_t j = 0; j < n; ++j) {
    int32_t l = n - 1;
    while (l >= 0 && !R[j][l]) --l;
    while (l >= 0) {
      int32_t j0 = -1;
      for (int32_t k = 0; k < j; ++k)
        if (lows[k] == l) {
          j0 = k;
          break;
        }
      if (j0 < 0) break;
      for (int32_t r = 0; r <= l; ++r) R[j][r] ^= R[j0][r];
      while (l >= 0 && !R[j][l]) --l;
    }
    lows[j] = l;
  }
  std::vector<char> killed(n, 0);
  for (int32_t j = 0; j < n; ++j)
    if (lows[j] >= 0) {
      red.pairs.emplace_back(lows[j], j);
      killed[lows[j]] = 1;
    }
  for (int32_t j = 0; j < n; ++j)
    if (lows[j] < 0 && !killed[j]) red.essential.push_back(j);
  return detail::pairs_to_diagram(K, red);
}

}  // namespace tml
