#pragma once

// Network layer primitives. Each layer kind implements a fused forward that
// records its own backward closure. Convolutions go through im2col + gemm.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlkit/rng.hpp"
#include "tmlkit/tensor.hpp"

namespace tml {

enum class LayerKind {
  Linear,
  Conv2d,
  BatchNorm2d,
  BatchNorm1d,
  ReLU,
  MaxPool2d,
  AvgPool2d,
  Flatten,
};

enum class Mode { Train, Eval };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm2d: return "batchnorm2d";
    case LayerKind::BatchNorm1d: return "batchnorm1d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::AvgPool2d: return "avgpool2d";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

struct LayerConfig {
  LayerKind kind = LayerKind::ReLU;
  int in = 0;       // input features / channels
  int out = 0;      // output features / channels
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  bool bias = true;

  static LayerConfig linear(int in, int out, bool bias = true) {
    return {LayerKind::Linear, in, out, 0, 1, 0, bias};
  }
  static LayerConfig conv2d(int in_ch, int out_ch, int kernel, int stride = 1,
                            int padding = 0, bool bias = true) {
    return {LayerKind::Conv2d, in_ch, out_ch, kernel, stride, padding, bias};
  }
  static LayerConfig batchnorm2d(int ch) {
    return {LayerKind::BatchNorm2d, ch, ch, 0, 1, 0, true};
  }
  static LayerConfig batchnorm1d(int dim) {
    return {LayerKind::BatchNorm1d, dim, dim, 0, 1, 0, true};
  }
  static LayerConfig relu() { return {LayerKind::ReLU, 0, 0, 0, 1, 0, false}; }
  static LayerConfig maxpool2d(int kernel, int stride) {
    return {LayerKind::MaxPool2d, 0, 0, kernel, stride, 0, false};
  }
  static LayerConfig avgpool2d(int kernel, int stride) {
    return {LayerKind::AvgPool2d, 0, 0, kernel, stride, 0, false};
  }
  static LayerConfig flatten() {
    return {LayerKind::Flatten, 0, 0, 0, 1, 0, false};
  }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0)
        throw std::invalid_argument(std::string("layer config: ") + what +
                                    " must be positive, got " +
                                    std::to_string(v));
    };
    switch (kind) {
      case LayerKind::Linear:
        positive(in, "in");
        positive(out, "out");
        break;
      case LayerKind::Conv2d:
        positive(in, "in_ch");
        positive(out, "out_ch");
        positive(kernel, "kernel");
        positive(stride, "stride");
        if (padding < 0)
          throw std::invalid_argument("layer config: negative padding");
        break;
      case LayerKind::BatchNorm2d:
      case LayerKind::BatchNorm1d:
        positive(in, "channels");
        break;
      case LayerKind::MaxPool2d:
      case LayerKind::AvgPool2d:
        positive(kernel, "kernel");
        positive(stride, "stride");
        break;
      case LayerKind::ReLU:
      case LayerKind::Flatten:
        break;
    }
  }
};

namespace detail {

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int s, int p, int OH,
            int OW, T* cols) {
  // cols is [C*k*k, OH*OW]
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<int64_t>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<int64_t>(c) * k * k + ki * k + kj) * ohw;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * s - p + ki;
          if (ih < 0 || ih >= H) {
            for (int ow = 0; ow < OW; ++ow) row[oh * OW + ow] = T(0);
            continue;
          }
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * s - p + kj;
            row[oh * OW + ow] = (iw >= 0 && iw < W) ? xc[ih * W + iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accum(const T* cols, int C, int H, int W, int k, int s, int p,
                  int OH, int OW, T* dx) {
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c) {
    T* dxc = dx + static_cast<int64_t>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row =
            cols + (static_cast<int64_t>(c) * k * k + ki * k + kj) * ohw;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * s - p + ki;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * s - p + kj;
            if (iw >= 0 && iw < W) dxc[ih * W + iw] += row[oh * OW + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
struct Layer {
  LayerConfig cfg;
  Tensor<T> weight;  // linear [out,in]; conv [out,in,k,k]; batchnorm gamma
  Tensor<T> bias;    // linear/conv bias; batchnorm beta
  std::vector<T> running_mean, running_var;  // batchnorm buffers
  T bn_eps = T(1e-5);
  T bn_momentum = T(0.1);

  static Layer make(LayerConfig cfg, Rng& rng) {
    cfg.validate();
    Layer layer;
    layer.cfg = cfg;
    switch (cfg.kind) {
      case LayerKind::Linear:
      case LayerKind::Conv2d: {
        int64_t fan_in = cfg.kind == LayerKind::Linear
                             ? cfg.in
                             : static_cast<int64_t>(cfg.in) * cfg.kernel *
                                   cfg.kernel;
        int64_t wn = cfg.kind == LayerKind::Linear
                         ? static_cast<int64_t>(cfg.out) * cfg.in
                         : static_cast<int64_t>(cfg.out) * fan_in;
        T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
        std::vector<T> w(wn);
        for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
        Shape ws = cfg.kind == LayerKind::Linear
                       ? Shape{cfg.out, cfg.in}
                       : Shape{cfg.out, cfg.in, cfg.kernel, cfg.kernel};
        layer.weight = Tensor<T>(ws, std::move(w), true);
        if (cfg.bias) {
          std::vector<T> b(cfg.out);
          for (auto& v : b) v = static_cast<T>(rng.uniform(-bound, bound));
          layer.bias = Tensor<T>({cfg.out}, std::move(b), true);
        }
        break;
      }
      case LayerKind::BatchNorm2d:
      case LayerKind::BatchNorm1d:
        layer.weight = Tensor<T>({cfg.in}, std::vector<T>(cfg.in, T(1)), true);
        layer.bias = Tensor<T>({cfg.in}, std::vector<T>(cfg.in, T(0)), true);
        layer.running_mean.assign(cfg.in, T(0));
        layer.running_var.assign(cfg.in, T(1));
        break;
      default:
        break;
    }
    return layer;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    if (weight.defined()) out.push_back(&weight);
    if (bias.defined()) out.push_back(&bias);
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    if (weight.defined()) n += weight.numel();
    if (bias.defined()) n += bias.numel();
    return n;
  }

  // Serialized blobs in a fixed order: parameters, then batchnorm buffers.
  std::vector<std::vector<T>*> state_blobs() {
    std::vector<std::vector<T>*> out;
    if (weight.defined()) out.push_back(&weight.data());
    if (bias.defined()) out.push_back(&bias.data());
    if (cfg.kind == LayerKind::BatchNorm2d || cfg.kind == LayerKind::BatchNorm1d) {
      out.push_back(&running_mean);
      out.push_back(&running_var);
    }
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    switch (cfg.kind) {
      case LayerKind::Linear: return forward_linear(x);
      case LayerKind::Conv2d: return forward_conv(x);
      case LayerKind::BatchNorm2d: return forward_batchnorm(x, mode, true);
      case LayerKind::BatchNorm1d: return forward_batchnorm(x, mode, false);
      case LayerKind::ReLU: return relu(x);
      case LayerKind::MaxPool2d: return forward_maxpool(x);
      case LayerKind::AvgPool2d: return forward_avgpool(x);
      case LayerKind::Flatten: return forward_flatten(x);
    }
    throw std::logic_error("unreachable layer kind");
  }

 private:
  [[noreturn]] void dim_error(const Tensor<T>& x, const std::string& why) const {
    throw std::invalid_argument(std::string(layer_kind_name(cfg.kind)) + ": " +
                                why + " (input shape " + shape_str(x.shape()) +
                                ")");
  }

  Tensor<T> forward_linear(const Tensor<T>& x) {
    if (x.ndim() != 2) dim_error(x, "expected a 2-d input");
    if (x.dim(1) != cfg.in)
      dim_error(x, "expected " + std::to_string(cfg.in) + " input features, got " +
                       std::to_string(x.dim(1)));
    int N = x.dim(0);
    std::vector<T> out(static_cast<int64_t>(N) * cfg.out);
    gemm(false, true, N, cfg.out, cfg.in, T(1), x.data().data(), cfg.in,
         weight.data().data(), cfg.in, T(0), out.data(), cfg.out);
    if (cfg.bias)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < cfg.out; ++j) out[i * cfg.out + j] += bias.data()[j];

    auto* xn = x.node();
    auto* wn = weight.node();
    auto* bn = cfg.bias ? bias.node() : nullptr;
    int in = cfg.in, o = cfg.out;
    std::vector<Tensor<T>> parents{x, weight};
    if (cfg.bias) parents.push_back(bias);
    return Tensor<T>::make_op(
        Shape{N, o}, std::move(out), std::move(parents),
        [xn, wn, bn, N, in, o](typename Tensor<T>::Node* out_node) {
          const T* dy = out_node->grad.data();
          if (xn->requires_grad || xn->has_graph)
            gemm(false, false, N, in, o, T(1), dy, o, wn->data.data(), in, T(1),
                 Tensor<T>::grad_buf(xn).data(), in);
          if (wn->requires_grad || wn->has_graph)
            gemm(true, false, o, in, N, T(1), dy, o, xn->data.data(), in, T(1),
                 Tensor<T>::grad_buf(wn).data(), in);
          if (bn && (bn->requires_grad || bn->has_graph)) {
            auto& g = Tensor<T>::grad_buf(bn);
            for (int i = 0; i < N; ++i)
              for (int j = 0; j < o; ++j) g[j] += dy[i * o + j];
          }
        });
  }

  Tensor<T> forward_conv(const Tensor<T>& x) {
    if (x.ndim() != 4) dim_error(x, "expected a 4-d input [N,C,H,W]");
    if (x.dim(1) != cfg.in)
      dim_error(x, "expected " + std::to_string(cfg.in) + " input channels, got " +
                       std::to_string(x.dim(1)));
    const int N = x.dim(0), C = cfg.in, H = x.dim(2), W = x.dim(3);
    const int k = cfg.kernel, s = cfg.stride, p = cfg.padding;
    const int OH = (H + 2 * p - k) / s + 1;
    const int OW = (W + 2 * p - k) / s + 1;
    if (H + 2 * p < k || W + 2 * p < k || OH < 1 || OW < 1)
      dim_error(x, "kernel " + std::to_string(k) + " does not fit input");
    const int OC = cfg.out, ckk = C * k * k, ohw = OH * OW;

    auto cols = std::make_shared<std::vector<T>>(
        static_cast<int64_t>(N) * ckk * ohw);
    std::vector<T> out(static_cast<int64_t>(N) * OC * ohw);
    for (int n = 0; n < N; ++n) {
      T* cols_n = cols->data() + static_cast<int64_t>(n) * ckk * ohw;
      detail::im2col(x.data().data() + static_cast<int64_t>(n) * C * H * W, C,
                     H, W, k, s, p, OH, OW, cols_n);
      gemm(false, false, OC, ohw, ckk, T(1), weight.data().data(), ckk, cols_n,
           ohw, T(0), out.data() + static_cast<int64_t>(n) * OC * ohw, ohw);
    }
    if (cfg.bias)
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < OC; ++c) {
          T b = bias.data()[c];
          T* row = out.data() + (static_cast<int64_t>(n) * OC + c) * ohw;
          for (int i = 0; i < ohw; ++i) row[i] += b;
        }

    auto* xn = x.node();
    auto* wn = weight.node();
    auto* bn = cfg.bias ? bias.node() : nullptr;
    std::vector<Tensor<T>> parents{x, weight};
    if (cfg.bias) parents.push_back(bias);
    return Tensor<T>::make_op(
        Shape{N, OC, OH, OW}, std::move(out), std::move(parents),
        [xn, wn, bn, cols, N, C, H, W, k, s, p, OH, OW, OC, ckk,
         ohw](typename Tensor<T>::Node* out_node) {
          const T* dy = out_node->grad.data();
          bool need_dx = xn->requires_grad || xn->has_graph;
          bool need_dw = wn->requires_grad || wn->has_graph;
          std::vector<T> dcols;
          if (need_dx) dcols.resize(static_cast<int64_t>(ckk) * ohw);
          for (int n = 0; n < N; ++n) {
            const T* dy_n = dy + static_cast<int64_t>(n) * OC * ohw;
            const T* cols_n = cols->data() + static_cast<int64_t>(n) * ckk * ohw;
            if (need_dw)
              gemm(false, true, OC, ckk, ohw, T(1), dy_n, ohw, cols_n, ohw,
                   T(1), Tensor<T>::grad_buf(wn).data(), ckk);
            if (need_dx) {
              gemm(true, false, ckk, ohw, OC, T(1), wn->data.data(), ckk, dy_n,
                   ohw, T(0), dcols.data(), ohw);
              detail::col2im_accum(
                  dcols.data(), C, H, W, k, s, p, OH, OW,
                  Tensor<T>::grad_buf(xn).data() +
                      static_cast<int64_t>(n) * C * H * W);
            }
          }
          if (bn && (bn->requires_grad || bn->has_graph)) {
            auto& g = Tensor<T>::grad_buf(bn);
            for (int n = 0; n < N; ++n)
              for (int c = 0; c < OC; ++c) {
                const T* row = dy + (static_cast<int64_t>(n) * OC + c) * ohw;
                double acc = 0.0;
                for (int i = 0; i < ohw; ++i) acc += row[i];
                g[c] += static_cast<T>(acc);
              }
          }
        });
  }

  // Shared 1d/2d batchnorm over [N,C] or [N,C,H,W]; normalization axes are
  // everything but the channel. Running variance stores the biased estimate,
  // the same quantity used for normalization, so train and eval outputs
  // coincide exactly when running stats equal batch stats.
  Tensor<T> forward_batchnorm(const Tensor<T>& x, Mode mode, bool spatial) {
    if (spatial && x.ndim() != 4) dim_error(x, "expected a 4-d input [N,C,H,W]");
    if (!spatial && x.ndim() != 2) dim_error(x, "expected a 2-d input [N,C]");
    if (x.dim(1) != cfg.in)
      dim_error(x, "expected " + std::to_string(cfg.in) + " channels, got " +
                       std::to_string(x.dim(1)));
    const int N = x.dim(0), C = cfg.in;
    const int hw = spatial ? x.dim(2) * x.dim(3) : 1;
    const int64_t m = static_cast<int64_t>(N) * hw;

    std::vector<T> mean(C), inv_std(C);
    if (mode == Mode::Train) {
      if (m < 2)
        dim_error(x, "train mode needs at least 2 values per channel");
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* row = x.data().data() + (static_cast<int64_t>(n) * C + c) * hw;
          for (int i = 0; i < hw; ++i) acc += row[i];
        }
        double mu = acc / static_cast<double>(m);
        double var_acc = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* row = x.data().data() + (static_cast<int64_t>(n) * C + c) * hw;
          for (int i = 0; i < hw; ++i) {
            double d = row[i] - mu;
            var_acc += d * d;
          }
        }
        double var = var_acc / static_cast<double>(m);
        mean[c] = static_cast<T>(mu);
        inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(bn_eps)));
        running_mean[c] = static_cast<T>((1.0 - bn_momentum) * running_mean[c] +
                                         bn_momentum * mu);
        running_var[c] = static_cast<T>((1.0 - bn_momentum) * running_var[c] +
                                        bn_momentum * var);
      }
    } else {
      for (int c = 0; c < C; ++c) {
        mean[c] = running_mean[c];
        inv_std[c] = static_cast<T>(
            1.0 / std::sqrt(static_cast<double>(running_var[c]) +
                            static_cast<double>(bn_eps)));
      }
    }

    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* row = x.data().data() + (static_cast<int64_t>(n) * C + c) * hw;
        T* hrow = xhat->data() + (static_cast<int64_t>(n) * C + c) * hw;
        T* orow = out.data() + (static_cast<int64_t>(n) * C + c) * hw;
        T g = weight.data()[c], b = bias.data()[c];
        for (int i = 0; i < hw; ++i) {
          T h = (row[i] - mean[c]) * inv_std[c];
          hrow[i] = h;
          orow[i] = g * h + b;
        }
      }

    auto* xn = x.node();
    auto* gn = weight.node();
    auto* bn = bias.node();
    bool train = mode == Mode::Train;
    return Tensor<T>::make_op(
        x.shape(), std::move(out), {x, weight, bias},
        [xn, gn, bn, xhat, inv_std = std::move(inv_std), N, C, hw, m,
         train](typename Tensor<T>::Node* out_node) {
          const T* dy = out_node->grad.data();
          std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const T* drow = dy + (static_cast<int64_t>(n) * C + c) * hw;
              const T* hrow = xhat->data() + (static_cast<int64_t>(n) * C + c) * hw;
              for (int i = 0; i < hw; ++i) {
                sum_dy[c] += drow[i];
                sum_dy_xhat[c] += static_cast<double>(drow[i]) * hrow[i];
              }
            }
          if (gn->requires_grad || gn->has_graph) {
            auto& g = Tensor<T>::grad_buf(gn);
            for (int c = 0; c < C; ++c) g[c] += static_cast<T>(sum_dy_xhat[c]);
          }
          if (bn->requires_grad || bn->has_graph) {
            auto& g = Tensor<T>::grad_buf(bn);
            for (int c = 0; c < C; ++c) g[c] += static_cast<T>(sum_dy[c]);
          }
          if (xn->requires_grad || xn->has_graph) {
            auto& gx = Tensor<T>::grad_buf(xn);
            for (int n = 0; n < N; ++n)
              for (int c = 0; c < C; ++c) {
                const T* drow = dy + (static_cast<int64_t>(n) * C + c) * hw;
                const T* hrow =
                    xhat->data() + (static_cast<int64_t>(n) * C + c) * hw;
                T* grow = gx.data() + (static_cast<int64_t>(n) * C + c) * hw;
                T scale = gn->data[c] * inv_std[c];
                if (train) {
                  T mdy = static_cast<T>(sum_dy[c] / static_cast<double>(m));
                  T mdyh = static_cast<T>(sum_dy_xhat[c] / static_cast<double>(m));
                  for (int i = 0; i < hw; ++i)
                    grow[i] += scale * (drow[i] - mdy - hrow[i] * mdyh);
                } else {
                  for (int i = 0; i < hw; ++i) grow[i] += scale * drow[i];
                }
              }
          }
        });
  }

  Tensor<T> forward_maxpool(const Tensor<T>& x) {
    if (x.ndim() != 4) dim_error(x, "expected a 4-d input [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int k = cfg.kernel, s = cfg.stride;
    if (H < k || W < k) dim_error(x, "pool window does not fit input");
    const int OH = (H - k) / s + 1, OW = (W - k) / s + 1;
    std::vector<T> out(static_cast<int64_t>(N) * C * OH * OW);
    auto argmax = std::make_shared<std::vector<int32_t>>(out.size());
    int64_t oi = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* xc = x.data().data() + (static_cast<int64_t>(n) * C + c) * H * W;
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow, ++oi) {
            int bi = oh * s, bj = ow * s;
            T best = xc[bi * W + bj];
            int besti = bi * W + bj;
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) {
                T v = xc[(bi + i) * W + bj + j];
                if (v > best) {  // ties keep the first scanned position
                  best = v;
                  besti = (bi + i) * W + bj + j;
                }
              }
            out[oi] = best;
            (*argmax)[oi] = besti;
          }
      }
    auto* xn = x.node();
    return Tensor<T>::make_op(
        Shape{N, C, OH, OW}, std::move(out), {x},
        [xn, argmax, N, C, H, W, OH, OW](typename Tensor<T>::Node* out_node) {
          auto& gx = Tensor<T>::grad_buf(xn);
          const T* dy = out_node->grad.data();
          int64_t oi = 0;
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              T* gc = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
              for (int i = 0; i < OH * OW; ++i, ++oi)
                gc[(*argmax)[oi]] += dy[oi];
            }
        });
  }

  Tensor<T> forward_avgpool(const Tensor<T>& x) {
    if (x.ndim() != 4) dim_error(x, "expected a 4-d input [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int k = cfg.kernel, s = cfg.stride;
    if (H < k || W < k) dim_error(x, "pool window does not fit input");
    const int OH = (H - k) / s + 1, OW = (W - k) / s + 1;
    const T inv = T(1) / static_cast<T>(k * k);
    std::vector<T> out(static_cast<int64_t>(N) * C * OH * OW);
    int64_t oi = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* xc = x.data().data() + (static_cast<int64_t>(n) * C + c) * H * W;
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow, ++oi) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j)
                acc += xc[(oh * s + i) * W + ow * s + j];
            out[oi] = static_cast<T>(acc) * inv;
          }
      }
    auto* xn = x.node();
    return Tensor<T>::make_op(
        Shape{N, C, OH, OW}, std::move(out), {x},
        [xn, N, C, H, W, OH, OW, k, s, inv](typename Tensor<T>::Node* out_node) {
          auto& gx = Tensor<T>::grad_buf(xn);
          const T* dy = out_node->grad.data();
          int64_t oi = 0;
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              T* gc = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
              for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                  T g = dy[oi] * inv;
                  for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j)
                      gc[(oh * s + i) * W + ow * s + j] += g;
                }
            }
        });
  }

  Tensor<T> forward_flatten(const Tensor<T>& x) {
    if (x.ndim() < 2) dim_error(x, "expected at least 2 dimensions");
    int N = x.dim(0);
    int64_t rest = x.numel() / N;
    auto* xn = x.node();
    std::vector<T> out(x.data());
    return Tensor<T>::make_op(Shape{N, static_cast<int>(rest)}, std::move(out),
                              {x}, [xn](typename Tensor<T>::Node* out_node) {
                                auto& gx = Tensor<T>::grad_buf(xn);
                                for (size_t i = 0; i < gx.size(); ++i)
                                  gx[i] += out_node->grad[i];
                              });
  }
};

}  // namespace tml
