#pragma once

#include "regioncl/ops.hpp"
#include "regioncl/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace regioncl {

enum class Mode { train, eval };

enum class LayerKind { conv2d, batchnorm2d, relu, linear, global_avg_pool };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  double eps = 1e-5;
  double momentum = 0.1;  // running-stat update rate

  static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride < 1 || pad < 0)
      throw std::invalid_argument("conv2d spec: bad hyperparameters");
    return s;
  }
  static LayerSpec batchnorm(int channels, double eps = 1e-5, double momentum = 0.1) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm2d;
    s.in_ch = s.out_ch = channels;
    s.eps = eps;
    s.momentum = momentum;
    if (channels <= 0 || eps <= 0) throw std::invalid_argument("batchnorm spec: bad hyperparameters");
    return s;
  }
  static LayerSpec relu_() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }
  static LayerSpec lin(int in_features, int out_features) {
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.in_ch = in_features;
    s.out_ch = out_features;
    if (in_features <= 0 || out_features <= 0)
      throw std::invalid_argument("linear spec: bad hyperparameters");
    return s;
  }
  static LayerSpec gap() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
  }
};

namespace detail {
inline int conv_out_extent(int in, int kernel, int stride, int pad, const char* axis) {
  const int span = in + 2 * pad - kernel;
  if (span < 0)
    throw std::invalid_argument(std::string("conv2d: kernel does not fit along ") + axis);
  return span / stride + 1;
}

// col layout: [in_ch*k*k, out_h*out_w], one image
template <typename S>
void im2col(const S* img, int ch, int h, int w, int kernel, int stride, int pad, int out_h,
            int out_w, S* col) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t row = 0;
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        S* dst = col + row * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) {
            std::fill_n(dst + static_cast<std::int64_t>(oy) * out_w, out_w, S(0));
            continue;
          }
          const S* src = img + c * plane + static_cast<std::int64_t>(y) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride - pad + kx;
            dst[static_cast<std::int64_t>(oy) * out_w + ox] = (x >= 0 && x < w) ? src[x] : S(0);
          }
        }
      }
}

template <typename S>
void col2im_add(const S* col, int ch, int h, int w, int kernel, int stride, int pad, int out_h,
                int out_w, S* img) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t row = 0;
  for (int c = 0; c < ch; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        const S* src = col + row * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          S* dst = img + c * plane + static_cast<std::int64_t>(y) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride - pad + kx;
            if (x >= 0 && x < w) dst[x] += src[static_cast<std::int64_t>(oy) * out_w + ox];
          }
        }
      }
}
}  // namespace detail

// x: [n, in_ch, h, w], weight: [out_ch, in_ch, k, k]. No bias; batchnorm follows in every stack here.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, int stride, int pad) {
  if (x.ndim() != 4)
    throw std::invalid_argument("conv2d: expected [n,ch,h,w] input, got " + shape_str(x.shape()));
  if (weight.ndim() != 4)
    throw std::invalid_argument("conv2d: expected [out,in,k,k] weight, got " +
                                shape_str(weight.shape()));
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_ch = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != ch)
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                " input channels, input has " + std::to_string(ch));
  if (weight.dim(3) != kernel) throw std::invalid_argument("conv2d: non-square kernel");
  const int out_h = detail::conv_out_extent(h, kernel, stride, pad, "height");
  const int out_w = detail::conv_out_extent(w, kernel, stride, pad, "width");

  const int col_rows = ch * kernel * kernel;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  auto out = Tensor<S>::zeros({n, out_ch, out_h, out_w});
  // col buffers are kept for the weight/input gradients
  auto cols = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n) * col_rows * out_plane);
  ConstMatView<S> wmat(weight.data(), out_ch, col_rows);
  for (int i = 0; i < n; ++i) {
    S* col = cols->data() + static_cast<std::int64_t>(i) * col_rows * out_plane;
    detail::im2col(x.data() + static_cast<std::int64_t>(i) * ch * h * w, ch, h, w, kernel, stride,
                   pad, out_h, out_w, col);
    MatView<S>(out.data() + static_cast<std::int64_t>(i) * out_ch * out_plane, out_ch,
               static_cast<int>(out_plane))
        .noalias() = wmat * ConstMatView<S>(col, col_rows, static_cast<int>(out_plane));
  }
  record<S>(out, {x, weight},
            [nx = x.node(), nw = weight.node(), cols, n, ch, h, w, out_ch, kernel, stride, pad,
             out_h, out_w, col_rows, out_plane](TensorNode<S>& o) {
              if (nw->requires_grad) {
                std::vector<S> dw(nw->value.size(), S(0));
                MatView<S> dwm(dw.data(), out_ch, col_rows);
                for (int i = 0; i < n; ++i)
                  dwm.noalias() +=
                      ConstMatView<S>(o.grad.data() + static_cast<std::int64_t>(i) * out_ch * out_plane,
                                      out_ch, static_cast<int>(out_plane)) *
                      ConstMatView<S>(cols->data() + static_cast<std::int64_t>(i) * col_rows * out_plane,
                                      col_rows, static_cast<int>(out_plane))
                          .transpose();
                nw->accumulate(dw.data(), static_cast<std::int64_t>(dw.size()));
              }
              if (nx->requires_grad) {
                std::vector<S> dx(nx->value.size(), S(0));
                std::vector<S> dcol(static_cast<std::size_t>(col_rows) * out_plane);
                ConstMatView<S> wmat(nw->value.data(), out_ch, col_rows);
                for (int i = 0; i < n; ++i) {
                  MatView<S>(dcol.data(), col_rows, static_cast<int>(out_plane)).noalias() =
                      wmat.transpose() *
                      ConstMatView<S>(o.grad.data() + static_cast<std::int64_t>(i) * out_ch * out_plane,
                                      out_ch, static_cast<int>(out_plane));
                  detail::col2im_add(dcol.data(), ch, h, w, kernel, stride, pad, out_h, out_w,
                                     dx.data() + static_cast<std::int64_t>(i) * ch * h * w);
                }
                nx->accumulate(dx.data(), static_cast<std::int64_t>(dx.size()));
              }
            });
  check_finite(out, "conv2d");
  return out;
}

// Train mode normalizes with biased batch statistics and updates running stats
// (running_var stores the unbiased estimate). Eval mode uses the stored stats.
template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      std::vector<S>& running_mean, std::vector<S>& running_var, Mode mode,
                      S eps, S momentum) {
  if (x.ndim() != 4)
    throw std::invalid_argument("batchnorm2d: expected [n,ch,h,w] input, got " +
                                shape_str(x.shape()));
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.numel() != ch || beta.numel() != ch ||
      static_cast<int>(running_mean.size()) != ch || static_cast<int>(running_var.size()) != ch)
    throw std::invalid_argument("batchnorm2d: parameter size does not match " +
                                std::to_string(ch) + " channels");
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t per_ch = static_cast<std::int64_t>(n) * plane;

  std::vector<S> mean_c(static_cast<std::size_t>(ch)), invstd_c(static_cast<std::size_t>(ch));
  if (mode == Mode::train) {
    if (per_ch < 2) throw std::invalid_argument("batchnorm2d: train mode needs >= 2 samples per channel");
    for (int c = 0; c < ch; ++c) {
      S s = 0, s2 = 0;
      for (int i = 0; i < n; ++i) {
        ConstArrView<S> v(x.data() + (static_cast<std::int64_t>(i) * ch + c) * plane, plane);
        s += v.sum();
        s2 += v.square().sum();
      }
      const S m = s / static_cast<S>(per_ch);
      const S var = std::max(s2 / static_cast<S>(per_ch) - m * m, S(0));
      mean_c[static_cast<std::size_t>(c)] = m;
      invstd_c[static_cast<std::size_t>(c)] = S(1) / std::sqrt(var + eps);
      const S unbiased = var * static_cast<S>(per_ch) / static_cast<S>(per_ch - 1);
      running_mean[static_cast<std::size_t>(c)] =
          (S(1) - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * m;
      running_var[static_cast<std::size_t>(c)] =
          (S(1) - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < ch; ++c) {
      mean_c[static_cast<std::size_t>(c)] = running_mean[static_cast<std::size_t>(c)];
      invstd_c[static_cast<std::size_t>(c)] =
          S(1) / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
    }
  }

  auto out = Tensor<S>::zeros(x.shape());
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c) {
      ConstArrView<S> v(x.data() + (static_cast<std::int64_t>(i) * ch + c) * plane, plane);
      ArrView<S>(out.data() + (static_cast<std::int64_t>(i) * ch + c) * plane, plane) =
          (v - mean_c[static_cast<std::size_t>(c)]) * invstd_c[static_cast<std::size_t>(c)] *
              gamma.data()[c] +
          beta.data()[c];
    }

  const bool train_stats = mode == Mode::train;
  record<S>(out, {x, gamma, beta},
            [nx = x.node(), ng = gamma.node(), nb = beta.node(), mean_c, invstd_c, n, ch, plane,
             per_ch, train_stats](TensorNode<S>& o) {
              // per channel: xhat = (x-mean)*invstd, dy arrives in o.grad
              for (int c = 0; c < ch; ++c) {
                const S m = mean_c[static_cast<std::size_t>(c)];
                const S is = invstd_c[static_cast<std::size_t>(c)];
                const S g = ng->value[static_cast<std::size_t>(c)];
                S sum_dy = 0, sum_dy_xhat = 0;
                for (int i = 0; i < n; ++i) {
                  ConstArrView<S> xv(nx->value.data() + (static_cast<std::int64_t>(i) * ch + c) * plane,
                                     plane);
                  ConstArrView<S> gy(o.grad.data() + (static_cast<std::int64_t>(i) * ch + c) * plane,
                                     plane);
                  sum_dy += gy.sum();
                  sum_dy_xhat += (gy * (xv - m) * is).sum();
                }
                if (ng->requires_grad) {
                  const S dg = sum_dy_xhat;
                  ng->accumulate_at(c, dg);
                }
                if (nb->requires_grad) nb->accumulate_at(c, sum_dy);
                if (nx->requires_grad) {
                  std::vector<S> dx(static_cast<std::size_t>(plane));
                  for (int i = 0; i < n; ++i) {
                    ConstArrView<S> xv(nx->value.data() + (static_cast<std::int64_t>(i) * ch + c) * plane,
                                       plane);
                    ConstArrView<S> gy(o.grad.data() + (static_cast<std::int64_t>(i) * ch + c) * plane,
                                       plane);
                    ArrView<S> dst(dx.data(), plane);
                    if (train_stats) {
                      const S inv_m = S(1) / static_cast<S>(per_ch);
                      dst = g * is * (gy - inv_m * sum_dy - (xv - m) * is * inv_m * sum_dy_xhat);
                    } else {
                      dst = gy * g * is;
                    }
                    nx->accumulate_slice((static_cast<std::int64_t>(i) * ch + c) * plane, dx.data(),
                                         plane);
                  }
                }
              }
            });
  check_finite(out, "batchnorm2d");
  return out;
}

// x: [n, features] -> x W^T + b
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.ndim() != 2)
    throw std::invalid_argument("linear: expected [n,features] input, got " + shape_str(x.shape()));
  if (weight.ndim() != 2 || weight.dim(1) != x.dim(1))
    throw std::invalid_argument("linear: weight " + shape_str(weight.shape()) +
                                " does not accept input " + shape_str(x.shape()));
  return add_rowvec(matmul_nt(x, weight), bias);
}

// [n, ch, h, w] -> [n, ch]
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.ndim() != 4)
    throw std::invalid_argument("global_avg_pool: expected [n,ch,h,w] input, got " +
                                shape_str(x.shape()));
  const int n = x.dim(0), ch = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const S inv = S(1) / static_cast<S>(plane);
  auto out = Tensor<S>::zeros({n, ch});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c)
      out.data()[static_cast<std::int64_t>(i) * ch + c] =
          ConstArrView<S>(x.data() + (static_cast<std::int64_t>(i) * ch + c) * plane, plane).sum() *
          inv;
  record<S>(out, {x}, [nx = x.node(), n, ch, plane, inv](TensorNode<S>& o) {
    std::vector<S> dx(nx->value.size());
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < ch; ++c)
        ArrView<S>(dx.data() + (static_cast<std::int64_t>(i) * ch + c) * plane, plane)
            .setConstant(o.grad[static_cast<std::size_t>(i) * ch + c] * inv);
    nx->accumulate(dx.data(), static_cast<std::int64_t>(dx.size()));
  });
  check_finite(out, "global_avg_pool");
  return out;
}

// A layer bundles its spec with owned parameters and (for batchnorm) running stats.
template <typename S>
struct Layer {
  LayerSpec spec;
  std::vector<Tensor<S>> params;
  std::vector<S> running_mean;
  std::vector<S> running_var;
};

template <typename S>
Layer<S> make_layer(const LayerSpec& spec, Rng& rng) {
  Layer<S> layer;
  layer.spec = spec;
  auto kaiming_uniform = [&rng](Shape shape, int fan_in) {
    auto t = Tensor<S>::zeros(std::move(shape));
    const double bound = std::sqrt(6.0 / fan_in);
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
  };
  switch (spec.kind) {
    case LayerKind::conv2d: {
      layer.params.push_back(kaiming_uniform({spec.out_ch, spec.in_ch, spec.kernel, spec.kernel},
                                             spec.in_ch * spec.kernel * spec.kernel));
      break;
    }
    case LayerKind::batchnorm2d: {
      auto gamma = Tensor<S>::full({spec.in_ch}, S(1));
      auto beta = Tensor<S>::zeros({spec.in_ch});
      gamma.set_requires_grad(true);
      beta.set_requires_grad(true);
      layer.params.push_back(gamma);
      layer.params.push_back(beta);
      layer.running_mean.assign(static_cast<std::size_t>(spec.in_ch), S(0));
      layer.running_var.assign(static_cast<std::size_t>(spec.in_ch), S(1));
      break;
    }
    case LayerKind::linear: {
      layer.params.push_back(kaiming_uniform({spec.out_ch, spec.in_ch}, spec.in_ch));
      auto bias = Tensor<S>::zeros({spec.out_ch});
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_ch));
      for (std::int64_t i = 0; i < bias.numel(); ++i)
        bias.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
      bias.set_requires_grad(true);
      layer.params.push_back(bias);
      break;
    }
    case LayerKind::relu:
    case LayerKind::global_avg_pool:
      break;
  }
  return layer;
}

template <typename S>
Tensor<S> layer_apply(Layer<S>& layer, const Tensor<S>& x, Mode mode) {
  switch (layer.spec.kind) {
    case LayerKind::conv2d:
      return conv2d(x, layer.params[0], layer.spec.stride, layer.spec.pad);
    case LayerKind::batchnorm2d:
      return batchnorm2d(x, layer.params[0], layer.params[1], layer.running_mean,
                         layer.running_var, mode, static_cast<S>(layer.spec.eps),
                         static_cast<S>(layer.spec.momentum));
    case LayerKind::relu:
      return relu(x);
    case LayerKind::linear:
      return linear(x, layer.params[0], layer.params[1]);
    case LayerKind::global_avg_pool:
      return global_avg_pool(x);
  }
  throw std::logic_error("layer_apply: unknown layer kind");
}

}  // namespace regioncl
