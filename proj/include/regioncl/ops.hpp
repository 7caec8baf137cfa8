#pragma once

#include "regioncl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace regioncl {

namespace detail {
template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}
template <typename S>
void check_2d(const Tensor<S>& t, const char* op) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                shape_str(t.shape()));
}
}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  auto out = Tensor<S>::zeros(a.shape());
  as_array(out) = as_array(a) + as_array(b);
  record<S>(out, {a, b}, [na = a.node(), nb = b.node()](TensorNode<S>& o) {
    if (na->requires_grad) na->accumulate(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
    if (nb->requires_grad) nb->accumulate(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
  });
  check_finite(out, "add");
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  auto out = Tensor<S>::zeros(a.shape());
  as_array(out) = as_array(a) - as_array(b);
  record<S>(out, {a, b}, [na = a.node(), nb = b.node()](TensorNode<S>& o) {
    const std::int64_t n = static_cast<std::int64_t>(o.grad.size());
    if (na->requires_grad) na->accumulate(o.grad.data(), n);
    if (nb->requires_grad) {
      std::vector<S> neg(o.grad.size());
      ArrView<S>(neg.data(), n) = -ConstArrView<S>(o.grad.data(), n);
      nb->accumulate(neg.data(), n);
    }
  });
  check_finite(out, "sub");
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  auto out = Tensor<S>::zeros(a.shape());
  as_array(out) = as_array(a) * as_array(b);
  record<S>(out, {a, b}, [na = a.node(), nb = b.node()](TensorNode<S>& o) {
    const std::int64_t n = static_cast<std::int64_t>(o.grad.size());
    std::vector<S> buf(o.grad.size());
    if (na->requires_grad) {
      ArrView<S>(buf.data(), n) = ConstArrView<S>(o.grad.data(), n) *
                                  ConstArrView<S>(nb->value.data(), n);
      na->accumulate(buf.data(), n);
    }
    if (nb->requires_grad) {
      ArrView<S>(buf.data(), n) = ConstArrView<S>(o.grad.data(), n) *
                                  ConstArrView<S>(na->value.data(), n);
      nb->accumulate(buf.data(), n);
    }
  });
  check_finite(out, "mul");
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  auto out = Tensor<S>::zeros(a.shape());
  as_array(out) = as_array(a) * factor;
  record<S>(out, {a}, [na = a.node(), factor](TensorNode<S>& o) {
    const std::int64_t n = static_cast<std::int64_t>(o.grad.size());
    std::vector<S> buf(o.grad.size());
    ArrView<S>(buf.data(), n) = ConstArrView<S>(o.grad.data(), n) * factor;
    na->accumulate(buf.data(), n);
  });
  check_finite(out, "scale");
  return out;
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S factor) { return scale(a, factor); }
template <typename S>
Tensor<S> operator*(S factor, const Tensor<S>& a) { return scale(a, factor); }

// identity forward, blocks all gradient flow
template <typename S>
Tensor<S> stop_gradient(const Tensor<S>& a) {
  return Tensor<S>::from_data(a.shape(), a.vec());
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  auto out = Tensor<S>::zeros(a.shape());
  as_array(out) = as_array(a).max(S(0));
  record<S>(out, {a}, [na = a.node()](TensorNode<S>& o) {
    const std::int64_t n = static_cast<std::int64_t>(o.grad.size());
    std::vector<S> buf(o.grad.size());
    for (std::int64_t i = 0; i < n; ++i)
      buf[static_cast<std::size_t>(i)] =
          na->value[static_cast<std::size_t>(i)] > S(0) ? o.grad[static_cast<std::size_t>(i)] : S(0);
    na->accumulate(buf.data(), n);
  });
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  auto out = Tensor<S>::zeros({1});
  out.data()[0] = as_array(a).sum();
  record<S>(out, {a}, [na = a.node()](TensorNode<S>& o) {
    std::vector<S> buf(na->value.size(), o.grad[0]);
    na->accumulate(buf.data(), static_cast<std::int64_t>(buf.size()));
  });
  check_finite(out, "sum");
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  const S inv = S(1) / static_cast<S>(a.numel());
  auto out = Tensor<S>::zeros({1});
  out.data()[0] = as_array(a).sum() * inv;
  record<S>(out, {a}, [na = a.node(), inv](TensorNode<S>& o) {
    std::vector<S> buf(na->value.size(), o.grad[0] * inv);
    na->accumulate(buf.data(), static_cast<std::int64_t>(buf.size()));
  });
  check_finite(out, "mean");
  return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) +
                                " -> " + shape_str(shape));
  auto out = Tensor<S>::from_data(std::move(shape), a.vec());
  record<S>(out, {a}, [na = a.node()](TensorNode<S>& o) {
    na->accumulate(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
  });
  return out;
}

// C = A * B, A: [m,k], B: [k,n]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "matmul");
  detail::check_2d(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " * " + shape_str(b.shape()));
  auto out = Tensor<S>::zeros({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a, m, k) * as_matrix(b, k, n);
  record<S>(out, {a, b}, [na = a.node(), nb = b.node(), m, k, n](TensorNode<S>& o) {
    ConstMatView<S> g(o.grad.data(), m, n);
    if (na->requires_grad) {
      std::vector<S> da(static_cast<std::size_t>(m) * k);
      MatView<S>(da.data(), m, k).noalias() = g * ConstMatView<S>(nb->value.data(), k, n).transpose();
      na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
    }
    if (nb->requires_grad) {
      std::vector<S> db(static_cast<std::size_t>(k) * n);
      MatView<S>(db.data(), k, n).noalias() = ConstMatView<S>(na->value.data(), m, k).transpose() * g;
      nb->accumulate(db.data(), static_cast<std::int64_t>(db.size()));
    }
  });
  check_finite(out, "matmul");
  return out;
}

// C = A * B^T, A: [m,k], B: [n,k]
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "matmul_nt");
  detail::check_2d(b, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw std::invalid_argument("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                                " * " + shape_str(b.shape()) + "^T");
  auto out = Tensor<S>::zeros({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a, m, k) * as_matrix(b, n, k).transpose();
  record<S>(out, {a, b}, [na = a.node(), nb = b.node(), m, k, n](TensorNode<S>& o) {
    ConstMatView<S> g(o.grad.data(), m, n);
    if (na->requires_grad) {
      std::vector<S> da(static_cast<std::size_t>(m) * k);
      MatView<S>(da.data(), m, k).noalias() = g * ConstMatView<S>(nb->value.data(), n, k);
      na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
    }
    if (nb->requires_grad) {
      std::vector<S> db(static_cast<std::size_t>(n) * k);
      MatView<S>(db.data(), n, k).noalias() = g.transpose() * ConstMatView<S>(na->value.data(), m, k);
      nb->accumulate(db.data(), static_cast<std::int64_t>(db.size()));
    }
  });
  check_finite(out, "matmul_nt");
  return out;
}

// per-row dot product of two [m,d] tensors -> [m]
template <typename S>
Tensor<S> row_dot(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "row_dot");
  detail::check_2d(a, "row_dot");
  const int m = a.dim(0), d = a.dim(1);
  auto out = Tensor<S>::zeros({m});
  for (int i = 0; i < m; ++i)
    out.data()[i] = ConstArrView<S>(a.data() + static_cast<std::int64_t>(i) * d, d)
                        .cwiseProduct(ConstArrView<S>(b.data() + static_cast<std::int64_t>(i) * d, d))
                        .sum();
  record<S>(out, {a, b}, [na = a.node(), nb = b.node(), m, d](TensorNode<S>& o) {
    std::vector<S> buf(static_cast<std::size_t>(m) * d);
    if (na->requires_grad) {
      for (int i = 0; i < m; ++i)
        ArrView<S>(buf.data() + static_cast<std::int64_t>(i) * d, d) =
            ConstArrView<S>(nb->value.data() + static_cast<std::int64_t>(i) * d, d) * o.grad[static_cast<std::size_t>(i)];
      na->accumulate(buf.data(), static_cast<std::int64_t>(buf.size()));
    }
    if (nb->requires_grad) {
      for (int i = 0; i < m; ++i)
        ArrView<S>(buf.data() + static_cast<std::int64_t>(i) * d, d) =
            ConstArrView<S>(na->value.data() + static_cast<std::int64_t>(i) * d, d) * o.grad[static_cast<std::size_t>(i)];
      nb->accumulate(buf.data(), static_cast<std::int64_t>(buf.size()));
    }
  });
  check_finite(out, "row_dot");
  return out;
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "concat_cols");
  detail::check_2d(b, "concat_cols");
  const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != m)
    throw std::invalid_argument("concat_cols: row count mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto out = Tensor<S>::zeros({m, p + q});
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data() + static_cast<std::int64_t>(i) * p, p,
                out.data() + static_cast<std::int64_t>(i) * (p + q));
    std::copy_n(b.data() + static_cast<std::int64_t>(i) * q, q,
                out.data() + static_cast<std::int64_t>(i) * (p + q) + p);
  }
  record<S>(out, {a, b}, [na = a.node(), nb = b.node(), m, p, q](TensorNode<S>& o) {
    if (na->requires_grad) {
      std::vector<S> da(static_cast<std::size_t>(m) * p);
      for (int i = 0; i < m; ++i)
        std::copy_n(o.grad.data() + static_cast<std::int64_t>(i) * (p + q), p,
                    da.data() + static_cast<std::int64_t>(i) * p);
      na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
    }
    if (nb->requires_grad) {
      std::vector<S> db(static_cast<std::size_t>(m) * q);
      for (int i = 0; i < m; ++i)
        std::copy_n(o.grad.data() + static_cast<std::int64_t>(i) * (p + q) + p, q,
                    db.data() + static_cast<std::int64_t>(i) * q);
      nb->accumulate(db.data(), static_cast<std::int64_t>(db.size()));
    }
  });
  return out;
}

// rows of `a` selected by index, with scatter-add backward
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, const std::vector<int>& idx) {
  detail::check_2d(a, "gather_rows");
  const int n = a.dim(0), d = a.dim(1);
  for (int i : idx)
    if (i < 0 || i >= n)
      throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                  " out of range for " + shape_str(a.shape()));
  const int m = static_cast<int>(idx.size());
  auto out = Tensor<S>::zeros({m, d});
  for (int i = 0; i < m; ++i)
    std::copy_n(a.data() + static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) * d, d,
                out.data() + static_cast<std::int64_t>(i) * d);
  record<S>(out, {a}, [na = a.node(), idx, m, d](TensorNode<S>& o) {
    std::vector<S> da(na->value.size(), S(0));
    for (int i = 0; i < m; ++i) {
      S* dst = da.data() + static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) * d;
      const S* src = o.grad.data() + static_cast<std::int64_t>(i) * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
  });
  return out;
}

// out[i] = a[i, idx[i]]
template <typename S>
Tensor<S> select_cols(const Tensor<S>& a, const std::vector<int>& idx) {
  detail::check_2d(a, "select_cols");
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(idx.size()) != m)
    throw std::invalid_argument("select_cols: need one column index per row");
  for (int j : idx)
    if (j < 0 || j >= n) throw std::invalid_argument("select_cols: column index out of range");
  auto out = Tensor<S>::zeros({m});
  for (int i = 0; i < m; ++i)
    out.data()[i] = a.data()[static_cast<std::int64_t>(i) * n + idx[static_cast<std::size_t>(i)]];
  record<S>(out, {a}, [na = a.node(), idx, m, n](TensorNode<S>& o) {
    std::vector<S> da(na->value.size(), S(0));
    for (int i = 0; i < m; ++i)
      da[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] =
          o.grad[static_cast<std::size_t>(i)];
    na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
  });
  return out;
}

// broadcast-add a row vector v[n] to every row of a[m,n]
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& v) {
  detail::check_2d(a, "add_rowvec");
  const int m = a.dim(0), n = a.dim(1);
  if (v.ndim() != 1 || v.dim(0) != n)
    throw std::invalid_argument("add_rowvec: vector shape " + shape_str(v.shape()) +
                                " does not match row width " + std::to_string(n));
  auto out = Tensor<S>::zeros({m, n});
  as_matrix(out, m, n) = as_matrix(a, m, n).rowwise() +
                         Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(v.data(), n);
  record<S>(out, {a, v}, [na = a.node(), nv = v.node(), m, n](TensorNode<S>& o) {
    if (na->requires_grad) na->accumulate(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
    if (nv->requires_grad) {
      std::vector<S> dv(static_cast<std::size_t>(n), S(0));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dv[static_cast<std::size_t>(j)] += o.grad[static_cast<std::size_t>(i) * n + j];
      nv->accumulate(dv.data(), n);
    }
  });
  check_finite(out, "add_rowvec");
  return out;
}

// numerically stable per-row log(sum(exp(.))), [m,n] -> [m]
template <typename S>
Tensor<S> logsumexp_rows(const Tensor<S>& a) {
  detail::check_2d(a, "logsumexp_rows");
  const int m = a.dim(0), n = a.dim(1);
  auto out = Tensor<S>::zeros({m});
  for (int i = 0; i < m; ++i) {
    ConstArrView<S> row(a.data() + static_cast<std::int64_t>(i) * n, n);
    const S mx = row.maxCoeff();
    out.data()[i] = mx + std::log((row - mx).exp().sum());
  }
  record<S>(out, {a}, [na = a.node(), m, n](TensorNode<S>& o) {
    std::vector<S> da(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
      ConstArrView<S> row(na->value.data() + static_cast<std::int64_t>(i) * n, n);
      ArrView<S>(da.data() + static_cast<std::int64_t>(i) * n, n) =
          (row - o.value[static_cast<std::size_t>(i)]).exp() * o.grad[static_cast<std::size_t>(i)];
    }
    na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
  });
  check_finite(out, "logsumexp_rows");
  return out;
}

// Unit-normalize along the last axis ([d] as one slice, [m,d] per row) with a
// 1e-12 divisor floor, so zero slices stay finite and differentiable.
template <typename S>
Tensor<S> l2_normalize(const Tensor<S>& a) {
  if (a.ndim() != 1 && a.ndim() != 2)
    throw std::invalid_argument("l2_normalize: expected 1-d or 2-d tensor, got " +
                                shape_str(a.shape()));
  const int m = a.ndim() == 2 ? a.dim(0) : 1;
  const int d = a.ndim() == 2 ? a.dim(1) : a.dim(0);
  const S floor = S(1e-12);
  auto out = Tensor<S>::zeros(a.shape());
  std::vector<S> denom(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    ConstArrView<S> row(a.data() + static_cast<std::int64_t>(i) * d, d);
    const S nrm = std::sqrt(row.square().sum());
    denom[static_cast<std::size_t>(i)] = std::max(nrm, floor);
    ArrView<S>(out.data() + static_cast<std::int64_t>(i) * d, d) = row / denom[static_cast<std::size_t>(i)];
  }
  record<S>(out, {a}, [na = a.node(), denom, m, d, floor](TensorNode<S>& o) {
    std::vector<S> da(static_cast<std::size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
      ConstArrView<S> y(o.value.data() + static_cast<std::int64_t>(i) * d, d);
      ConstArrView<S> g(o.grad.data() + static_cast<std::int64_t>(i) * d, d);
      ArrView<S> dst(da.data() + static_cast<std::int64_t>(i) * d, d);
      const S dn = denom[static_cast<std::size_t>(i)];
      if (dn <= floor) {
        dst = g / dn;  // floored slice: y = x / floor is linear
      } else {
        const S gy = (g * y).sum();
        dst = (g - y * gy) / dn;
      }
    }
    na->accumulate(da.data(), static_cast<std::int64_t>(da.size()));
  });
  check_finite(out, "l2_normalize");
  return out;
}

}  // namespace regioncl
