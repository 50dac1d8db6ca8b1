#pragma once

// Linear centered kernel alignment between activation matrices:
//   CKA(X, Y) = ||Xc' Yc||_F^2 / (||Xc' Xc||_F * ||Yc' Yc||_F)
// computed through N x N centered Gram matrices, which gives the identical
// value (||Xc' Yc||_F^2 = <Kx, Ky>_F and ||Xc' Xc||_F = ||Kx||_F) while
// letting one Gram per (model, cut) be reused across many pairings.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/blas.hpp"
#include "tmlkit/model.hpp"

namespace tml {

// N x N Gram matrix of the column-centered rows of X, in double precision.
inline std::vector<double> centered_gram(const Tensor<float>& x) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("centered_gram: expected an N x D matrix");
  int64_t n = x.dim(0), d = x.dim(1);
  if (n < 2)
    throw std::invalid_argument("centered_gram: need at least 2 samples");
  const auto& v = x.data();
  for (float f : v)
    if (!std::isfinite(f))
      throw std::invalid_argument("centered_gram: non-finite activation");
  std::vector<double> mean(d, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mean[j] += v[i * d + j];
  for (int64_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  std::vector<double> xc(n * d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) xc[i * d + j] = v[i * d + j] - mean[j];
  std::vector<double> g(n * n);
  gram(static_cast<int>(n), static_cast<int>(d), xc.data(), g.data());
  return g;
}

inline double cka_from_grams(const std::vector<double>& kx,
                             const std::vector<double>& ky) {
  if (kx.size() != ky.size() || kx.empty())
    throw std::invalid_argument("cka: Gram size mismatch");
  double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
  for (size_t i = 0; i < kx.size(); ++i) {
    dot += kx[i] * ky[i];
    nx2 += kx[i] * kx[i];
    ny2 += ky[i] * ky[i];
  }
  if (!(nx2 > 0.0) || !(ny2 > 0.0))
    throw std::domain_error(
        "undefined CKA: constant activations (zero centered norm)");
  return dot / (std::sqrt(nx2) * std::sqrt(ny2));
}

inline double linear_cka(const Tensor<float>& x, const Tensor<float>& y) {
  if (x.shape().size() != 2 || y.shape().size() != 2)
    throw std::invalid_argument("linear_cka: expected N x D matrices");
  if (x.dim(0) != y.dim(0))
    throw std::invalid_argument("linear_cka: sample counts differ (" +
                                std::to_string(x.dim(0)) + " vs " +
                                std::to_string(y.dim(0)) + ")");
  return cka_from_grams(centered_gram(x), centered_gram(y));
}

// Activations of every sample at cut k, gathered batch by batch into [N, D].
inline Tensor<float> activations_at_cut(Model& m, const DatasetSplit& split,
                                        int k, int batch_size = 256) {
  if (split.size() == 0)
    throw std::invalid_argument("activations_at_cut: empty dataset");
  std::vector<float> all;
  int64_t d = -1;
  std::vector<int64_t> idx;
  for (int64_t at = 0; at < split.size(); at += batch_size) {
    idx.clear();
    for (int64_t i = at; i < std::min(split.size(), at + batch_size); ++i)
      idx.push_back(i);
    auto y = forward_to_layer(m, k, batch_tensor(split, idx));
    if (d < 0) {
      d = y.dim(1);
      all.reserve(split.size() * d);
    }
    all.insert(all.end(), y.data().begin(), y.data().end());
  }
  return Tensor<float>({static_cast<int>(split.size()), static_cast<int>(d)},
                       std::move(all));
}

// Per-cut CKA between two models over a fixed evaluation set.
inline std::vector<double> cka_profile(Model& f1, Model& f2,
                                       const DatasetSplit& data) {
  if (f1.num_cuts() != f2.num_cuts())
    throw std::invalid_argument("cka_profile: cut structures differ");
  std::vector<double> out;
  for (int k = 1; k <= f1.num_cuts(); ++k)
    out.push_back(linear_cka(activations_at_cut(f1, data, k),
                             activations_at_cut(f2, data, k)));
  return out;
}

}  // namespace tml
