#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
// A Tensor is a shared handle; copies alias the same storage. Ops record a
// backward closure on the output node while grad mode is enabled and some
// input participates in a gradient.

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tmlkit/blas.hpp"

namespace tml {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct GradMode {
  static bool& enabled() {
    static thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool has_graph = false;  // depends on some grad-requiring leaf
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
  };

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(data.size()));
    for (int d : shape)
      if (d <= 0)
        throw std::invalid_argument("tensor: non-positive dimension in " +
                                    shape_str(shape));
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->data = std::move(data);
    n_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[i]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  int64_t numel() const { return shape_numel(n_->shape); }

  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  // Gradient buffer, allocated as zeros on first access.
  std::vector<T>& grad() { return grad_buf(n_.get()); }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.assign(n_->grad.size(), T(0));
  }

  Node* node() const { return n_.get(); }
  const std::shared_ptr<Node>& handle() const { return n_; }

  static std::vector<T>& grad_buf(Node* n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
    return n->grad;
  }

  // Builds an op output. back(out_node) is stored only when recording.
  template <typename BackFn>
  static Tensor make_op(Shape shape, std::vector<T> data,
                        std::vector<Tensor> parents, BackFn&& back) {
    Tensor out(std::move(shape), std::move(data));
    bool record = GradMode::enabled();
    if (record) {
      bool any = false;
      for (const auto& p : parents)
        any = any || p.n_->requires_grad || p.n_->has_graph;
      record = any;
    }
    if (record) {
      out.n_->has_graph = true;
      for (auto& p : parents) out.n_->parents.push_back(p.n_);
      Node* raw = out.n_.get();
      out.n_->backprop = [raw, back = std::forward<BackFn>(back)]() mutable {
        back(raw);
      };
    }
    return out;
  }

  // Reverse-mode pass from a scalar loss. The recorded graph is consumed:
  // a second call without a new forward pass is an error.
  void backward() {
    if (!n_) throw std::runtime_error("backward: undefined tensor");
    if (numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(n_->shape));
    if (!n_->has_graph)
      throw std::runtime_error(
          "backward: no recorded computation graph (already consumed, or "
          "gradients were disabled during the forward pass)");

    std::vector<Node*> order;
    topo_sort(n_.get(), order);
    grad_buf(n_.get());
    n_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backprop) (*it)->backprop();
    for (Node* n : order) {
      n->backprop = nullptr;
      n->parents.clear();
      if (!n->requires_grad) n->has_graph = false;
    }
  }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static void topo_sort(Node* root, std::vector<Node*>& order) {
    // Iterative post-order; child visit order is the parent list order, so
    // the accumulation sequence is deterministic.
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (done.count(n)) {
        stack.pop_back();
        continue;
      }
      if (i < n->parents.size()) {
        Node* next = n->parents[i++].get();
        if (!done.count(next)) stack.emplace_back(next, 0);
      } else {
        done.insert(n);
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> n_;
};

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

template <typename T>
void accum(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor<T>::make_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](typename Tensor<T>::Node* o) {
        if (an->requires_grad || an->has_graph)
          detail::accum(Tensor<T>::grad_buf(an), o->grad);
        if (bn->requires_grad || bn->has_graph)
          detail::accum(Tensor<T>::grad_buf(bn), o->grad);
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor<T>::make_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](typename Tensor<T>::Node* o) {
        if (an->requires_grad || an->has_graph) {
          auto& g = Tensor<T>::grad_buf(an);
          for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->data[i];
        }
        if (bn->requires_grad || bn->has_graph) {
          auto& g = Tensor<T>::grad_buf(bn);
          for (size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->data[i];
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);  // grad at 0 is 0
  auto* an = a.node();
  return Tensor<T>::make_op(a.shape(), std::move(out), {a},
                            [an](typename Tensor<T>::Node* o) {
                              auto& g = Tensor<T>::grad_buf(an);
                              for (size_t i = 0; i < g.size(); ++i)
                                if (an->data[i] > T(0)) g[i] += o->grad[i];
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v);
  auto* an = a.node();
  return Tensor<T>::make_op(Shape{1}, std::vector<T>{static_cast<T>(acc)}, {a},
                            [an](typename Tensor<T>::Node* o) {
                              auto& g = Tensor<T>::grad_buf(an);
                              for (size_t i = 0; i < g.size(); ++i)
                                g[i] += o->grad[0];
                            });
}

// a[m,k] * b[k,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<int64_t>(m) * n);
  gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n,
       T(0), out.data(), n);
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor<T>::make_op(
      Shape{m, n}, std::move(out), {a, b},
      [an, bn, m, n, k](typename Tensor<T>::Node* o) {
        if (an->requires_grad || an->has_graph)
          gemm(false, true, m, k, n, T(1), o->grad.data(), n, bn->data.data(),
               n, T(1), Tensor<T>::grad_buf(an).data(), k);
        if (bn->requires_grad || bn->has_graph)
          gemm(true, false, k, n, m, T(1), an->data.data(), k, o->grad.data(),
               n, T(1), Tensor<T>::grad_buf(bn).data(), n);
      });
}

}  // namespace tml
