#pragma once

// Shared test helpers: central finite-difference gradient checking in
// 64-bit mode, and small tensor builders.

#include <cmath>
#include <functional>
#include <vector>

#include "tmlkit/rng.hpp"
#include "tmlkit/tensor.hpp"

namespace tmltest {

template <typename T = double>
inline tml::Tensor<T> random_tensor(tml::Shape shape, tml::Rng& rng,
                                    bool requires_grad = false,
                                    double lo = -1.0, double hi = 1.0) {
  std::vector<T> data(tml::shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return tml::Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

// loss() must run a fresh forward pass over the checked tensors each call.
// Returns the max relative error between reverse-mode gradients and central
// differences, rel = |a - n| / max(1, |a|, |n|).
inline double gradient_check(const std::function<tml::Tensor<double>()>& loss,
                             std::vector<tml::Tensor<double>*> checked,
                             double step = 1e-5) {
  for (auto* t : checked) t->zero_grad();
  auto l = loss();
  l.backward();
  std::vector<std::vector<double>> analytic;
  for (auto* t : checked) analytic.push_back(t->grad());

  double worst = 0.0;
  tml::NoGradGuard ng;
  for (size_t pi = 0; pi < checked.size(); ++pi) {
    auto& data = checked[pi]->data();
    for (size_t i = 0; i < data.size(); ++i) {
      double saved = data[i];
      data[i] = saved + step;
      double up = loss().data()[0];
      data[i] = saved - step;
      double down = loss().data()[0];
      data[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace tmltest
