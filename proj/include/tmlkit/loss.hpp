#pragma once

// Softmax cross-entropy over a batch of logit rows, mean-reduced.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/tensor.hpp"

namespace tml {

// logits [N,K], labels in [0,K). Softmax subtracts the row max before
// exponentiating; the backward is (softmax - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw std::invalid_argument("cross entropy: logits must be 2-d, got " +
                                shape_str(logits.shape()));
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument(
        "cross entropy: " + std::to_string(labels.size()) + " labels for " +
        std::to_string(N) + " rows");
  for (int y : labels)
    if (y < 0 || y >= K)
      throw std::out_of_range("cross entropy: label " + std::to_string(y) +
                              " outside [0," + std::to_string(K) + ")");

  auto probs = std::make_shared<std::vector<T>>(logits.numel());
  double loss_acc = 0.0;
  for (int i = 0; i < N; ++i) {
    const T* row = logits.data().data() + static_cast<int64_t>(i) * K;
    T* prow = probs->data() + static_cast<int64_t>(i) * K;
    T mx = row[0];
    for (int j = 1; j < K; ++j)
      if (row[j] > mx) mx = row[j];
    double denom = 0.0;
    for (int j = 0; j < K; ++j) {
      double e = std::exp(static_cast<double>(row[j] - mx));
      prow[j] = static_cast<T>(e);
      denom += e;
    }
    for (int j = 0; j < K; ++j)
      prow[j] = static_cast<T>(static_cast<double>(prow[j]) / denom);
    loss_acc += -(static_cast<double>(row[labels[i]] - mx) - std::log(denom));
  }

  auto* ln = logits.node();
  return Tensor<T>::make_op(
      Shape{1}, std::vector<T>{static_cast<T>(loss_acc / N)}, {logits},
      [ln, probs, labels, N, K](typename Tensor<T>::Node* o) {
        auto& g = Tensor<T>::grad_buf(ln);
        const T scale = o->grad[0] / static_cast<T>(N);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < K; ++j) {
            T p = (*probs)[static_cast<int64_t>(i) * K + j];
            if (j == labels[i]) p -= T(1);
            g[static_cast<int64_t>(i) * K + j] += scale * p;
          }
      });
}

// Count of argmax matches. Ties resolve to the lowest class index.
template <typename T>
int64_t correct_count(const Tensor<T>& logits, const std::vector<int>& labels) {
  const int N = logits.dim(0), K = logits.dim(1);
  int64_t correct = 0;
  for (int i = 0; i < N; ++i) {
    const T* row = logits.data().data() + static_cast<int64_t>(i) * K;
    int best = 0;
    for (int j = 1; j < K; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[i]) ++correct;
  }
  return correct;
}

}  // namespace tml
