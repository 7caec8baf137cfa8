#pragma once

#include "regioncl/ops.hpp"
#include "regioncl/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace regioncl {

struct LossConfig {
  double temperature = 0.2;
  bool use_paste = true;
  bool use_canvas = true;
  bool use_intra_negative = true;

  void validate() const {
    if (!(temperature > 0)) throw std::invalid_argument("LossConfig: temperature must be positive");
  }
};

// FIFO dictionary of past key features. Stored as a ring buffer; the logical
// content is the last `fill` pushed rows and row order never affects the loss.
template <typename S>
struct QueueState {
  int capacity = 0;
  int dim = 0;
  std::vector<S> storage;  // capacity x dim
  int head = 0;            // next insertion slot
  int fill = 0;

  static QueueState make_empty(int capacity, int dim) {
    if (capacity <= 0 || dim <= 0) throw std::invalid_argument("QueueState: bad capacity or dim");
    QueueState q;
    q.capacity = capacity;
    q.dim = dim;
    q.storage.assign(static_cast<std::size_t>(capacity) * dim, S(0));
    return q;
  }

  // Warm start: full of random unit vectors, so the loss scale is stationary
  // from the first step.
  static QueueState make_warm(int capacity, int dim, Rng& rng) {
    auto q = make_empty(capacity, dim);
    for (int r = 0; r < capacity; ++r) {
      S norm2 = 0;
      S* row = q.storage.data() + static_cast<std::int64_t>(r) * dim;
      do {
        norm2 = 0;
        for (int j = 0; j < dim; ++j) {
          row[j] = static_cast<S>(rng.normal());
          norm2 += row[j] * row[j];
        }
      } while (norm2 < S(1e-12));
      const S inv = S(1) / std::sqrt(norm2);
      for (int j = 0; j < dim; ++j) row[j] *= inv;
    }
    q.fill = capacity;
    return q;
  }

  // Rows oldest-first.
  std::vector<S> contents() const {
    std::vector<S> out(static_cast<std::size_t>(fill) * dim);
    for (int r = 0; r < fill; ++r) {
      const int slot = ((head - fill + r) % capacity + capacity) % capacity;
      std::copy_n(storage.data() + static_cast<std::int64_t>(slot) * dim, dim,
                  out.data() + static_cast<std::int64_t>(r) * dim);
    }
    return out;
  }
};

namespace detail {
template <typename S>
void check_unit_rows(const Tensor<S>& t, const char* op) {
  if (!debug_checks()) return;
  const int d = t.dim(t.ndim() - 1);
  const int rows = static_cast<int>(t.numel() / d);
  for (int i = 0; i < rows; ++i) {
    const S n = std::sqrt(
        ConstArrView<S>(t.data() + static_cast<std::int64_t>(i) * d, d).square().sum());
    if (std::abs(n - S(1)) > S(1e-3))
      throw std::invalid_argument(std::string(op) + ": row " + std::to_string(i) +
                                  " is not unit-normalized (norm " + std::to_string(n) + ")");
  }
}

template <typename S>
void check_unit_queue(const QueueState<S>& q, const char* op) {
  if (!debug_checks()) return;
  const auto rows = q.contents();
  for (int i = 0; i < q.fill; ++i) {
    const S n = std::sqrt(
        ConstArrView<S>(rows.data() + static_cast<std::int64_t>(i) * q.dim, q.dim).square().sum());
    if (std::abs(n - S(1)) > S(1e-3))
      throw std::invalid_argument(std::string(op) + ": queue row " + std::to_string(i) +
                                  " is not unit-normalized");
  }
}

// constant [fill, dim] tensor of the queue rows; grad-free by construction
template <typename S>
Tensor<S> queue_as_tensor(const QueueState<S>& q) {
  return Tensor<S>::from_data({q.fill, q.dim}, q.contents());
}

// softmax cross-entropy of the positive column against optional negative blocks,
// averaged over the batch: mean_i [logsumexp(row_i/tau) - pos_i/tau]
template <typename S>
Tensor<S> nce_from_logit_blocks(const Tensor<S>& pos, const std::vector<Tensor<S>>& neg_blocks,
                                S tau) {
  const int b = pos.dim(0);
  auto logits = reshape(pos, {b, 1});
  for (const auto& blk : neg_blocks) logits = concat_cols(logits, blk);
  logits = scale(logits, S(1) / tau);
  auto lse = logsumexp_rows(logits);
  return mean(sub(lse, scale(pos, S(1) / tau)));
}
}  // namespace detail

// One positive per row against the queue negatives; the positive term itself is
// part of the denominator. Gradients reach q only.
template <typename S>
Tensor<S> info_nce_instance(const Tensor<S>& q, const Tensor<S>& k_pos,
                            const QueueState<S>& queue, S tau) {
  if (!(tau > 0)) throw std::invalid_argument("info_nce_instance: temperature must be positive");
  detail::check_same_shape(q, k_pos, "info_nce_instance");
  detail::check_2d(q, "info_nce_instance");
  if (queue.fill > 0 && queue.dim != q.dim(1))
    throw std::invalid_argument("info_nce_instance: queue dim " + std::to_string(queue.dim) +
                                " does not match feature dim " + std::to_string(q.dim(1)));
  detail::check_unit_rows(q, "info_nce_instance");
  detail::check_unit_rows(k_pos, "info_nce_instance");
  detail::check_unit_queue(queue, "info_nce_instance");

  auto pos = row_dot(q, stop_gradient(k_pos));
  std::vector<Tensor<S>> negs;
  if (queue.fill > 0) negs.push_back(matmul_nt(q, detail::queue_as_tensor(queue)));
  return detail::nce_from_logit_blocks(pos, negs, tau);
}

// Region loss: the paste half attracts p to the key of the pasted source and the
// canvas half attracts c to the composite's own key, each against the shared
// queue plus (optionally) the sibling region feature as an intra-image negative.
// Every included half carries the printed 1/2 weight. Gradients never flow
// through the key features or the sibling term.
template <typename S>
Tensor<S> info_nce_region(const Tensor<S>& p, const Tensor<S>& c, const Tensor<S>& k_p,
                          const Tensor<S>& k_c, const QueueState<S>& queue,
                          const LossConfig& cfg) {
  cfg.validate();
  detail::check_same_shape(p, c, "info_nce_region");
  detail::check_same_shape(p, k_p, "info_nce_region");
  detail::check_same_shape(p, k_c, "info_nce_region");
  detail::check_2d(p, "info_nce_region");
  detail::check_unit_rows(p, "info_nce_region");
  detail::check_unit_rows(c, "info_nce_region");
  detail::check_unit_rows(k_p, "info_nce_region");
  detail::check_unit_rows(k_c, "info_nce_region");
  detail::check_unit_queue(queue, "info_nce_region");
  const S tau = static_cast<S>(cfg.temperature);

  auto half = [&](const Tensor<S>& anchor, const Tensor<S>& key, const Tensor<S>& sibling) {
    auto pos = row_dot(anchor, stop_gradient(key));
    std::vector<Tensor<S>> negs;
    if (queue.fill > 0) negs.push_back(matmul_nt(anchor, detail::queue_as_tensor(queue)));
    if (cfg.use_intra_negative) {
      const int b = anchor.dim(0);
      negs.push_back(reshape(row_dot(anchor, stop_gradient(sibling)), {b, 1}));
    }
    return scale(detail::nce_from_logit_blocks(pos, negs, tau), S(0.5));
  };

  Tensor<S> loss;
  if (cfg.use_paste) loss = half(p, k_p, c);
  if (cfg.use_canvas) {
    auto c_half = half(c, k_c, p);
    loss = loss.defined() ? add(loss, c_half) : c_half;
  }
  if (!loss.defined()) loss = Tensor<S>::zeros({1});
  return loss;
}

template <typename S>
Tensor<S> total_loss(const Tensor<S>& l_ins, const Tensor<S>& l_reg) {
  return add(l_ins, l_reg);
}

// -cos(a_i, b_i) averaged over rows; b is treated as a constant.
template <typename S>
Tensor<S> neg_cosine(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "neg_cosine");
  auto a2 = a.ndim() == 1 ? reshape(a, {1, a.dim(0)}) : a;
  auto b2 = b.ndim() == 1 ? reshape(b, {1, b.dim(0)}) : b;
  auto bn = l2_normalize(stop_gradient(b2));
  return scale(mean(row_dot(l2_normalize(a2), bn)), S(-1));
}

// SimSiam-style composite: the instance term plus the half-weighted region terms.
// k_p must already be gathered to the paste sources (k[paste_source]).
template <typename S>
Tensor<S> simsiam_total(const Tensor<S>& q, const Tensor<S>& p, const Tensor<S>& c,
                        const Tensor<S>& k, const Tensor<S>& k_p, const Tensor<S>& k_c) {
  auto l_ins = neg_cosine(q, k);
  auto l_reg = scale(add(neg_cosine(p, k_p), neg_cosine(c, k_c)), S(0.5));
  return add(l_ins, l_reg);
}

template <typename S>
void queue_push(QueueState<S>& queue, const S* keys, int count, int dim) {
  if (dim != queue.dim)
    throw std::invalid_argument("queue_push: key dim " + std::to_string(dim) +
                                " does not match queue dim " + std::to_string(queue.dim));
  if (count < 0) throw std::invalid_argument("queue_push: negative count");
  for (int i = 0; i < count; ++i) {
    std::copy_n(keys + static_cast<std::int64_t>(i) * dim, dim,
                queue.storage.data() + static_cast<std::int64_t>(queue.head) * dim);
    queue.head = (queue.head + 1) % queue.capacity;
    if (queue.fill < queue.capacity) ++queue.fill;
  }
}

template <typename S>
void queue_push(QueueState<S>& queue, const Tensor<S>& keys) {
  if (keys.ndim() != 2)
    throw std::invalid_argument("queue_push: expected [batch, dim] keys, got " +
                                shape_str(keys.shape()));
  detail::check_unit_rows(keys, "queue_push");
  queue_push(queue, keys.data(), keys.dim(0), keys.dim(1));
}

}  // namespace regioncl
