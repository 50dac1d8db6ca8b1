#pragma once

// Adam with bias correction and decoupled weight decay.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tmlkit/tensor.hpp"

namespace tml {

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t t = 0;
};

// One update of a single parameter tensor. Decay is decoupled: it scales the
// parameter directly and never enters the moment estimates.
template <typename T>
void adam_step(Tensor<T>& param, AdamState<T>& state, const AdamParams& hp) {
  auto& w = param.data();
  auto& g = param.grad();
  if (state.m.empty()) {
    state.m.assign(w.size(), T(0));
    state.v.assign(w.size(), T(0));
  }
  if (state.m.size() != w.size())
    throw std::invalid_argument("adam: state size does not match parameter");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < w.size(); ++i) {
    double gi = g[i];
    double m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * gi;
    double v = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * gi * gi;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    double mhat = m / bc1;
    double vhat = v / bc2;
    double wi = w[i];
    wi -= hp.lr * hp.weight_decay * wi;
    wi -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    w[i] = static_cast<T>(wi);
  }
}

// Optimizer over a parameter group; pairs each tensor with its moment state.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamParams hp)
      : params_(std::move(params)), states_(params_.size()), hp_(hp) {}

  void step() {
    for (size_t i = 0; i < params_.size(); ++i)
      adam_step(*params_[i], states_[i], hp_);
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  const AdamParams& hyper() const { return hp_; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<AdamState<T>> states_;
  AdamParams hp_;
};

}  // namespace tml
