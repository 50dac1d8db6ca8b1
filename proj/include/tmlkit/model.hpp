#pragma once

// Model construction, training, evaluation, activation extraction, and
// checkpoint serialization for the two studied families:
//   MLP: Flatten, then 5 linear layers separated by ReLU (4 cut points).
//   CNN: 6 blocks of conv3x3+batchnorm+ReLU with 2x2 max pools after blocks
//        2..5, then global average pool, flatten, linear head (5 cut points,
//        one at each internal block boundary; pools belong to their block).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/dataset.hpp"
#include "tmlkit/layers.hpp"
#include "tmlkit/loss.hpp"
#include "tmlkit/optim.hpp"
#include "tmlkit/rng.hpp"

namespace tml {

enum class Family { MLP, CNN };

inline const char* family_name(Family f) {
  return f == Family::MLP ? "mlp" : "cnn";
}

struct ModelSpec {
  Family family = Family::MLP;
  int in_channels = 3;
  int input_hw = 32;
  int num_classes = 3;
  int hidden = 256;                                // MLP width
  std::vector<int> channels = {8, 8, 16, 16, 32, 32};  // CNN block widths

  void validate() const {
    if (in_channels < 1 || input_hw < 1 || num_classes < 2)
      throw std::invalid_argument("model spec: non-positive dimensions");
    if (family == Family::MLP && hidden < 1)
      throw std::invalid_argument("model spec: non-positive hidden width");
    if (family == Family::CNN) {
      if (channels.size() != 6)
        throw std::invalid_argument("model spec: CNN needs 6 block widths");
      for (int c : channels)
        if (c < 1)
          throw std::invalid_argument("model spec: non-positive channel");
      if (input_hw % 16 != 0)
        throw std::invalid_argument(
            "model spec: CNN input size must be divisible by 16 (4 pools)");
    }
  }

  std::string descriptor(const std::string& input_kind) const {
    std::ostringstream os;
    os << "family=" << family_name(family) << " in=" << in_channels
       << " hw=" << input_hw << " classes=" << num_classes;
    if (family == Family::MLP) os << " hidden=" << hidden;
    else {
      os << " channels=";
      for (size_t i = 0; i < channels.size(); ++i)
        os << (i ? "," : "") << channels[i];
    }
    os << " kind=" << input_kind;
    return os.str();
  }
};

struct Model {
  ModelSpec spec;
  std::string input_kind = "raw";  // raw | pi
  uint64_t seed = 0;
  double train_accuracy = 0.0, test_accuracy = 0.0;
  std::vector<Layer<float>> layers;
  std::vector<int> cut_after;  // cut k (1-based) -> index of its last layer

  int num_cuts() const { return static_cast<int>(cut_after.size()); }

  std::vector<Tensor<float>*> parameters() {
    std::vector<Tensor<float>*> out;
    for (auto& l : layers)
      for (auto* p : l.parameters()) out.push_back(p);
    return out;
  }

  void set_requires_grad(bool b) {
    for (auto* p : parameters()) p->set_requires_grad(b);
  }
};

inline Model build_model(const ModelSpec& spec, uint64_t seed,
                         const std::string& input_kind = "raw") {
  spec.validate();
  Model m;
  m.spec = spec;
  m.input_kind = input_kind;
  m.seed = seed;
  Rng rng(mix_seed(seed, 0x1217));
  auto add = [&](LayerConfig cfg) {
    m.layers.push_back(Layer<float>::make(cfg, rng));
  };
  if (spec.family == Family::MLP) {
    int in = spec.in_channels * spec.input_hw * spec.input_hw;
    add(LayerConfig::flatten());
    add(LayerConfig::linear(in, spec.hidden));
    for (int i = 0; i < 4; ++i) {
      add(LayerConfig::relu());
      m.cut_after.push_back(static_cast<int>(m.layers.size()) - 1);
      bool last = i == 3;
      add(LayerConfig::linear(spec.hidden,
                              last ? spec.num_classes : spec.hidden));
    }
  } else {
    int prev = spec.in_channels;
    for (int b = 0; b < 6; ++b) {
      add(LayerConfig::conv2d(prev, spec.channels[b], 3, 1, 1));
      add(LayerConfig::batchnorm2d(spec.channels[b]));
      add(LayerConfig::relu());
      if (b >= 1 && b <= 4) add(LayerConfig::maxpool2d(2, 2));
      if (b < 5) m.cut_after.push_back(static_cast<int>(m.layers.size()) - 1);
      prev = spec.channels[b];
    }
    int spatial = spec.input_hw / 16;
    add(LayerConfig::avgpool2d(spatial, spatial));  // global average pool
    add(LayerConfig::flatten());
    add(LayerConfig::linear(prev, spec.num_classes));
  }
  return m;
}

// Runs layers [from, to] inclusive.
inline Tensor<float> forward_range(Model& m, Tensor<float> x, int from, int to,
                                   Mode mode) {
  for (int i = from; i <= to; ++i) x = m.layers[i].forward(x, mode);
  return x;
}

inline Tensor<float> forward(Model& m, Tensor<float> x, Mode mode) {
  return forward_range(m, std::move(x), 0,
                       static_cast<int>(m.layers.size()) - 1, mode);
}

inline Tensor<float> batch_tensor(const DatasetSplit& split,
                                  const std::vector<int64_t>& idx) {
  const int64_t sn = split.sample_numel();
  std::vector<float> data(idx.size() * sn);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(split.sample(idx[i]), split.sample(idx[i]) + sn,
              data.begin() + static_cast<int64_t>(i) * sn);
  return Tensor<float>({static_cast<int>(idx.size()), split.channels,
                        split.height, split.width},
                       std::move(data));
}

inline std::vector<int> batch_labels(const DatasetSplit& split,
                                     const std::vector<int64_t>& idx) {
  std::vector<int> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = split.labels[idx[i]];
  return out;
}

inline double evaluate(Model& m, const DatasetSplit& split,
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
    auto logits = forward(m, batch_tensor(split, idx), Mode::Eval);
    correct += correct_count(logits, batch_labels(split, idx));
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

// Deterministic epoch-shuffled minibatch stream; a trailing partial epoch
// chunk smaller than the batch is dropped and the order reshuffled.
class BatchStream {
 public:
  BatchStream(int64_t n, int batch, uint64_t seed)
      : n_(n), batch_(batch), rng_(seed) {
    if (n_ < batch_)
      throw std::invalid_argument("batch stream: dataset smaller than batch");
    order_.resize(n_);
    for (int64_t i = 0; i < n_; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<int64_t> next() {
    if (at_ + batch_ > n_) {
      rng_.shuffle(order_);
      at_ = 0;
    }
    std::vector<int64_t> out(order_.begin() + at_,
                             order_.begin() + at_ + batch_);
    at_ += batch_;
    return out;
  }

 private:
  int64_t n_, at_ = 0;
  int batch_;
  Rng rng_;
  std::vector<int64_t> order_;
};

struct TrainHyper {
  double lr = 5e-3;
  int batch = 64;
  double weight_decay = 1e-5;
  int iterations = 1000;

  void validate() const {
    if (!(lr > 0) || batch < 2 || !(weight_decay >= 0) || iterations < 0)
      throw std::invalid_argument("train hyper: non-positive value");
  }
};

// Trains in place; freezes parameters and records final accuracies.
inline void train_model(Model& m, const DatasetSplit& train,
                        const DatasetSplit& test, const TrainHyper& hyper) {
  hyper.validate();
  if (train.size() == 0)
    throw std::invalid_argument("train: empty dataset");
  m.set_requires_grad(true);
  AdamParams ap;
  ap.lr = hyper.lr;
  ap.weight_decay = hyper.weight_decay;
  Adam<float> opt(m.parameters(), ap);
  BatchStream stream(train.size(), hyper.batch, mix_seed(m.seed, 0xba7c));
  for (int it = 0; it < hyper.iterations; ++it) {
    auto idx = stream.next();
    auto logits = forward(m, batch_tensor(train, idx), Mode::Train);
    auto loss = softmax_cross_entropy(logits, batch_labels(train, idx));
    if (!std::isfinite(loss.data()[0]))
      throw std::runtime_error("training diverged: non-finite loss at iteration " +
                               std::to_string(it));
    loss.backward();
    opt.step();
    opt.zero_grad();
  }
  m.set_requires_grad(false);
  m.train_accuracy = evaluate(m, train);
  m.test_accuracy = evaluate(m, test);
}

namespace detail {

inline std::string descriptor_value(const std::string& descriptor,
                                    const std::string& key) {
  std::istringstream is(descriptor);
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq != std::string::npos && tok.substr(0, eq) == key)
      return tok.substr(eq + 1);
  }
  throw std::runtime_error("checkpoint descriptor missing key '" + key + "'");
}

}  // namespace detail

inline Model model_from_descriptor(const std::string& descriptor) {
  ModelSpec spec;
  std::string fam = detail::descriptor_value(descriptor, "family");
  if (fam == "mlp") spec.family = Family::MLP;
  else if (fam == "cnn") spec.family = Family::CNN;
  else throw std::runtime_error("checkpoint descriptor: unsupported family '" +
                                fam + "'");
  spec.in_channels = std::stoi(detail::descriptor_value(descriptor, "in"));
  spec.input_hw = std::stoi(detail::descriptor_value(descriptor, "hw"));
  spec.num_classes = std::stoi(detail::descriptor_value(descriptor, "classes"));
  if (spec.family == Family::MLP) {
    spec.hidden = std::stoi(detail::descriptor_value(descriptor, "hidden"));
  } else {
    spec.channels.clear();
    std::istringstream cs(detail::descriptor_value(descriptor, "channels"));
    std::string item;
    while (std::getline(cs, item, ',')) spec.channels.push_back(std::stoi(item));
  }
  return build_model(spec, 0, detail::descriptor_value(descriptor, "kind"));
}

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(Model& m, const std::string& path) {
  std::string out = "TMLS";
  detail::put_raw<uint32_t>(out, kCheckpointVersion);
  std::string d = m.spec.descriptor(m.input_kind);
  detail::put_raw<uint32_t>(out, static_cast<uint32_t>(d.size()));
  out += d;
  for (auto& layer : m.layers)
    for (auto* blob : layer.state_blobs())
      out.append(reinterpret_cast<const char*>(blob->data()),
                 blob->size() * sizeof(float));
  detail::put_raw<uint64_t>(out, m.seed);
  detail::put_raw<double>(out, m.train_accuracy);
  detail::put_raw<double>(out, m.test_accuracy);
  detail::write_file(path, out);
}

inline Model load_checkpoint(const std::string& path) {
  std::string in = detail::read_file(path);
  if (in.size() < 8 || in.compare(0, 4, "TMLS") != 0)
    throw std::runtime_error(path + ": not a model checkpoint");
  size_t at = 4;
  uint32_t version = detail::get_raw<uint32_t>(in, at);
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  uint32_t dlen = detail::get_raw<uint32_t>(in, at);
  if (at + dlen > in.size())
    throw std::runtime_error(path + ": truncated checkpoint descriptor");
  Model m = model_from_descriptor(in.substr(at, dlen));
  at += dlen;
  for (auto& layer : m.layers)
    for (auto* blob : layer.state_blobs()) {
      size_t bytes = blob->size() * sizeof(float);
      if (at + bytes > in.size())
        throw std::runtime_error(path + ": truncated parameter blob");
      std::memcpy(blob->data(), in.data() + at, bytes);
      at += bytes;
    }
  m.seed = detail::get_raw<uint64_t>(in, at);
  m.train_accuracy = detail::get_raw<double>(in, at);
  m.test_accuracy = detail::get_raw<double>(in, at);
  if (at != in.size())
    throw std::runtime_error(path + ": trailing bytes in checkpoint");
  m.set_requires_grad(false);
  return m;
}

// Post-activation output at cut k, flattened to [N, D].
inline Tensor<float> forward_to_layer(Model& m, int k,
                                      const Tensor<float>& batch) {
  if (k < 1 || k > m.num_cuts())
    throw std::out_of_range("cut index " + std::to_string(k) +
                            " outside [1," + std::to_string(m.num_cuts()) +
                            "]");
  NoGradGuard ng;
  auto y = forward_range(m, batch, 0, m.cut_after[k - 1], Mode::Eval);
  int n = y.dim(0);
  int d = static_cast<int>(y.numel() / n);
  return Tensor<float>({n, d}, y.data());
}

}  // namespace tml
