#pragma once

// Model stitching: frozen prefix of one network, a small trainable adapter,
// and the frozen suffix of another network, joined at a shared cut point.
// Flat cuts use an affine adapter with bias; feature-map cuts use a 1x1
// convolution without bias. The adapter starts as the identity, so stitching
// a model onto itself reproduces its logits exactly before any training.

#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/model.hpp"

namespace tml {

struct StitchedModel {
  Model* prefix_model = nullptr;  // frozen, shared read-only
  Model* suffix_model = nullptr;  // frozen, shared read-only
  int k = 0;                      // cut index, 1-based
  Layer<float> adapter;
};

inline void check_stitchable(const Model& f1, const Model& f2, int k) {
  if (f1.spec.family != f2.spec.family)
    throw std::invalid_argument(
        std::string("stitching requires matching families, got ") +
        family_name(f1.spec.family) + " and " + family_name(f2.spec.family));
  if (f1.num_cuts() != f2.num_cuts() || f1.spec.input_hw != f2.spec.input_hw ||
      f1.spec.num_classes != f2.spec.num_classes ||
      (f1.spec.family == Family::MLP ? f1.spec.hidden != f2.spec.hidden
                                     : f1.spec.channels != f2.spec.channels))
    throw std::invalid_argument("stitching requires matching cut structure");
  if (k < 1 || k > f1.num_cuts())
    throw std::out_of_range("cut index " + std::to_string(k) + " outside [1," +
                            std::to_string(f1.num_cuts()) + "]");
}

inline StitchedModel make_stitched(Model& f1, Model& f2, int k) {
  check_stitchable(f1, f2, k);
  StitchedModel st;
  st.prefix_model = &f1;
  st.suffix_model = &f2;
  st.k = k;
  Rng dummy(0);
  if (f1.spec.family == Family::MLP) {
    int d1 = f1.spec.hidden, d2 = f2.spec.hidden;
    st.adapter = Layer<float>::make(LayerConfig::linear(d1, d2, true), dummy);
    auto& w = st.adapter.weight.data();
    std::fill(w.begin(), w.end(), 0.0f);
    for (int i = 0; i < std::min(d1, d2); ++i) w[i * d1 + i] = 1.0f;
    std::fill(st.adapter.bias.data().begin(), st.adapter.bias.data().end(),
              0.0f);
  } else {
    int c1 = f1.spec.channels[k - 1], c2 = f2.spec.channels[k - 1];
    st.adapter =
        Layer<float>::make(LayerConfig::conv2d(c1, c2, 1, 1, 0, false), dummy);
    auto& w = st.adapter.weight.data();
    std::fill(w.begin(), w.end(), 0.0f);
    for (int i = 0; i < std::min(c1, c2); ++i) w[i * c1 + i] = 1.0f;
  }
  for (auto* p : st.adapter.parameters()) p->set_requires_grad(true);
  return st;
}

// Frozen segments always run in eval mode; only the adapter records a graph.
inline Tensor<float> stitched_forward(StitchedModel& st, Tensor<float> x) {
  Model& f1 = *st.prefix_model;
  Model& f2 = *st.suffix_model;
  {
    NoGradGuard ng;
    x = forward_range(f1, std::move(x), 0, f1.cut_after[st.k - 1], Mode::Eval);
  }
  x = st.adapter.forward(x, Mode::Eval);
  return forward_range(f2, std::move(x), f2.cut_after[st.k - 1] + 1,
                       static_cast<int>(f2.layers.size()) - 1, Mode::Eval);
}

inline double stitched_evaluate(StitchedModel& st, const DatasetSplit& split,
                                int batch_size = 256) {
  if (split.size() == 0)
    throw std::invalid_argument("evaluate: empty dataset");
  NoGradGuard ng;
  int64_t correct = 0;
  std::vector<int64_t> idx;
  for (int64_t at = 0; at < split.size(); at += batch_size) {
    idx.clear();
    for (int64_t i = at; i < std::min(split.size(), at + batch_size); ++i)
      idx.push_back(i);
    auto logits = stitched_forward(st, batch_tensor(split, idx));
    correct += correct_count(logits, batch_labels(split, idx));
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

// Trains the adapter on the train split, returns accuracy on the test split.
inline double train_stitch(StitchedModel& st, const DatasetSplit& train,
                           const DatasetSplit& test, const TrainHyper& hyper,
                           uint64_t seed) {
  hyper.validate();
  Adam<float> opt(st.adapter.parameters(), [&] {
    AdamParams ap;
    ap.lr = hyper.lr;
    ap.weight_decay = hyper.weight_decay;
    return ap;
  }());
  BatchStream stream(train.size(), hyper.batch, mix_seed(seed, 0x57e7));
  for (int it = 0; it < hyper.iterations; ++it) {
    auto idx = stream.next();
    auto logits = stitched_forward(st, batch_tensor(train, idx));
    auto loss = softmax_cross_entropy(logits, batch_labels(train, idx));
    if (!std::isfinite(loss.data()[0]))
      throw std::runtime_error(
          "stitch training diverged: non-finite loss at iteration " +
          std::to_string(it));
    loss.backward();
    opt.step();
    opt.zero_grad();
  }
  return stitched_evaluate(st, test);
}

}  // namespace tml
