#pragma once

#include "regioncl/augment.hpp"
#include "regioncl/contrastive.hpp"
#include "regioncl/model.hpp"
#include "regioncl/optim.hpp"
#include "regioncl/region.hpp"
#include "regioncl/threadpool.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace regioncl {

template <typename S>
Tensor<S> to_tensor(const ImageBatch& b) {
  auto t = Tensor<S>::zeros({b.n, b.ch, b.h, b.w});
  for (std::size_t i = 0; i < b.data.size(); ++i) t.data()[i] = static_cast<S>(b.data[i]);
  return t;
}

// Mean of the feature vectors inside the rectangle, per image and channel.
template <typename S>
Tensor<S> region_mean(const Tensor<S>& fm, FeatureRect r) {
  if (fm.ndim() != 4)
    throw std::invalid_argument("region_mean: expected [n,ch,h,w] feature map");
  const int n = fm.dim(0), ch = fm.dim(1), h = fm.dim(2), w = fm.dim(3);
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > w || r.y + r.h > h)
    throw std::invalid_argument("region_mean: rectangle out of bounds for " +
                                std::to_string(h) + "x" + std::to_string(w) + " map");
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const S inv = S(1) / static_cast<S>(static_cast<std::int64_t>(r.w) * r.h);
  auto out = Tensor<S>::zeros({n, ch});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c) {
      const S* base = fm.data() + (static_cast<std::int64_t>(i) * ch + c) * plane;
      S acc = 0;
      for (int y = r.y; y < r.y + r.h; ++y)
        acc += ConstArrView<S>(base + static_cast<std::int64_t>(y) * w + r.x, r.w).sum();
      out.data()[static_cast<std::int64_t>(i) * ch + c] = acc * inv;
    }
  record<S>(out, {fm}, [nf = fm.node(), r, n, ch, plane, w, inv](TensorNode<S>& o) {
    std::vector<S> dx(nf->value.size(), S(0));
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < ch; ++c) {
        const S g = o.grad[static_cast<std::size_t>(i) * ch + c] * inv;
        S* base = dx.data() + (static_cast<std::int64_t>(i) * ch + c) * plane;
        for (int y = r.y; y < r.y + r.h; ++y)
          ArrView<S>(base + static_cast<std::int64_t>(y) * w + r.x, r.w) += g;
      }
    nf->accumulate(dx.data(), static_cast<std::int64_t>(dx.size()));
  });
  check_finite(out, "region_mean");
  return out;
}

// Mean over everything outside the rectangle.
template <typename S>
Tensor<S> complement_mean(const Tensor<S>& fm, FeatureRect r) {
  if (fm.ndim() != 4)
    throw std::invalid_argument("complement_mean: expected [n,ch,h,w] feature map");
  const int n = fm.dim(0), ch = fm.dim(1), h = fm.dim(2), w = fm.dim(3);
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > w || r.y + r.h > h)
    throw std::invalid_argument("complement_mean: rectangle out of bounds");
  const std::int64_t area_out = static_cast<std::int64_t>(h) * w -
                                static_cast<std::int64_t>(r.w) * r.h;
  if (area_out == 0)
    throw std::invalid_argument("complement_mean: rectangle covers the whole map");
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const S inv = S(1) / static_cast<S>(area_out);
  auto out = Tensor<S>::zeros({n, ch});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c) {
      const S* base = fm.data() + (static_cast<std::int64_t>(i) * ch + c) * plane;
      S acc = ConstArrView<S>(base, plane).sum();
      for (int y = r.y; y < r.y + r.h; ++y)
        acc -= ConstArrView<S>(base + static_cast<std::int64_t>(y) * w + r.x, r.w).sum();
      out.data()[static_cast<std::int64_t>(i) * ch + c] = acc * inv;
    }
  record<S>(out, {fm}, [nf = fm.node(), r, n, ch, plane, h, w, inv](TensorNode<S>& o) {
    std::vector<S> dx(nf->value.size(), S(0));
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < ch; ++c) {
        const S g = o.grad[static_cast<std::size_t>(i) * ch + c] * inv;
        S* base = dx.data() + (static_cast<std::int64_t>(i) * ch + c) * plane;
        ArrView<S>(base, plane) += g;
        for (int y = r.y; y < r.y + r.h; ++y)
          ArrView<S>(base + static_cast<std::int64_t>(y) * w + r.x, r.w) -= g;
      }
    nf->accumulate(dx.data(), static_cast<std::int64_t>(dx.size()));
  });
  check_finite(out, "complement_mean");
  return out;
}

// Paste and canvas region features from one feature map. The rectangle must be
// strictly smaller than the map or the canvas mean is undefined.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> mask_pool(const Tensor<S>& fm, const RegionSpec& spec, int ratio) {
  const FeatureRect r = to_feature_coords(spec, ratio);
  if (fm.ndim() != 4) throw std::invalid_argument("mask_pool: expected [n,ch,h,w] feature map");
  if (r.w >= fm.dim(3) && r.h >= fm.dim(2))
    throw std::invalid_argument("mask_pool: region covers the entire map, canvas is empty");
  return {region_mean(fm, r), complement_mean(fm, r)};
}

template <typename S>
struct FeatureSet {
  Tensor<S> q, k;  // instance features, [batch, d]
  Tensor<S> p, c;  // region features; undefined when the region path is off
  std::vector<int> paste_source, canvas_source;
};

template <typename S>
struct ForwardResult {
  Tensor<S> l_ins, l_reg, l_total;
  FeatureSet<S> feats;
  std::optional<CompositeBatch> composite;
};

struct PipelineConfig {
  AugConfig aug;
  SwapConfig swap;
  LossConfig loss;
  PairingForm pairing = PairingForm::adjacent;
  bool symmetrize_s = false;  // mirrored second direction for the cosine variant
  double lr_base = 0.06;
};

namespace detail {
template <typename S>
Tensor<S> encode_project(ModelState<S>& m, const Tensor<S>& x, Mode mode) {
  auto fm = stack_apply(m.encoder, x, mode);
  return l2_normalize(stack_apply(m.projector, global_avg_pool(fm), mode));
}
}  // namespace detail

// Queue-based forward pass. Composites are built from the query views only; the
// key view goes through the momentum branch untouched. The queue is extended
// with the fresh keys only after both losses are computed, so a batch never
// serves as its own negatives.
template <typename S>
ForwardResult<S> forward_regioncl_m(const ImageBatch& batch_q, const ImageBatch& batch_k,
                                    ModelState<S>& model, QueueState<S>& queue,
                                    const LossConfig& loss_cfg, const SwapConfig& swap_cfg,
                                    PairingForm pairing, Rng& rng) {
  if (!model.has_momentum_branch())
    throw std::logic_error("forward_regioncl_m: model lacks a momentum branch");
  loss_cfg.validate();
  const bool region_on = loss_cfg.use_paste || loss_cfg.use_canvas;
  const S tau = static_cast<S>(loss_cfg.temperature);
  ForwardResult<S> res;

  // online instance path
  auto x_q = to_tensor<S>(batch_q);
  auto fm_q = stack_apply(model.encoder, x_q, Mode::train);
  auto q = l2_normalize(stack_apply(model.projector, global_avg_pool(fm_q), Mode::train));

  // online region path
  if (region_on) {
    const RegionSpec spec = sample_region(swap_cfg, rng);
    const PairingPlan plan = make_pairing(batch_q.n, pairing);
    res.composite = swap_regions(batch_q, spec, plan);
    auto x_pc = to_tensor<S>(res.composite->images);
    auto fm_pc = stack_apply(model.encoder, x_pc, Mode::train);
    auto [pm, cm] = mask_pool(fm_pc, spec, swap_cfg.ratio);
    res.feats.p = l2_normalize(stack_apply(model.projector, pm, Mode::train));
    res.feats.c = l2_normalize(stack_apply(model.projector, cm, Mode::train));
    res.feats.paste_source = res.composite->paste_source;
    res.feats.canvas_source = res.composite->canvas_source;
  }

  // momentum key path, tape-free
  Tensor<S> k;
  {
    NoGradGuard no_grad;
    auto x_k = to_tensor<S>(batch_k);
    auto fm_k = stack_apply(model.m_encoder, x_k, Mode::train);
    k = l2_normalize(stack_apply(model.m_projector, global_avg_pool(fm_k), Mode::train));
  }
  res.feats.q = q;
  res.feats.k = k;

  res.l_ins = info_nce_instance(q, k, queue, tau);
  if (region_on) {
    auto k_p = gather_rows(k, res.feats.paste_source);
    res.l_reg = info_nce_region(res.feats.p, res.feats.c, k_p, k, queue, loss_cfg);
  } else {
    res.l_reg = Tensor<S>::zeros({1});
  }
  res.l_total = total_loss(res.l_ins, res.l_reg);

  queue_push(queue, k);
  return res;
}

// Weight-shared cosine variant. The key branch reuses the online weights but
// runs tape-free, which is the stop-gradient of the printed procedure. With
// `symmetrize` the mirrored direction is averaged in.
template <typename S>
ForwardResult<S> forward_regioncl_s(const ImageBatch& batch_q, const ImageBatch& batch_k,
                                    ModelState<S>& model, const SwapConfig& swap_cfg,
                                    PairingForm pairing, bool symmetrize, Rng& rng) {
  if (!model.has_predictor())
    throw std::logic_error("forward_regioncl_s: model lacks a predictor");
  const bool region_on = model.method == Method::regioncl_s;
  ForwardResult<S> res;

  std::optional<RegionSpec> spec;
  std::optional<PairingPlan> plan;
  if (region_on) {
    spec = sample_region(swap_cfg, rng);
    plan = make_pairing(batch_q.n, pairing);
  }

  auto online_dir = [&](const ImageBatch& views_q, const ImageBatch& views_k, bool keep_feats)
      -> std::pair<Tensor<S>, Tensor<S>> {
    // key branch first, no tape
    Tensor<S> k;
    {
      NoGradGuard no_grad;
      auto x_k = to_tensor<S>(views_k);
      auto fm_k = stack_apply(model.encoder, x_k, Mode::train);
      k = l2_normalize(stack_apply(model.projector, global_avg_pool(fm_k), Mode::train));
    }
    auto x_q = to_tensor<S>(views_q);
    auto fm_q = stack_apply(model.encoder, x_q, Mode::train);
    auto q = l2_normalize(stack_apply(
        model.predictor, stack_apply(model.projector, global_avg_pool(fm_q), Mode::train),
        Mode::train));
    auto l_ins = neg_cosine(q, k);
    Tensor<S> l_reg;
    if (region_on) {
      auto composite = swap_regions(views_q, *spec, *plan);
      auto x_pc = to_tensor<S>(composite.images);
      auto fm_pc = stack_apply(model.encoder, x_pc, Mode::train);
      auto [pm, cm] = mask_pool(fm_pc, *spec, swap_cfg.ratio);
      auto p = l2_normalize(stack_apply(
          model.predictor, stack_apply(model.projector, pm, Mode::train), Mode::train));
      auto c = l2_normalize(stack_apply(
          model.predictor, stack_apply(model.projector, cm, Mode::train), Mode::train));
      auto k_p = gather_rows(k, composite.paste_source);
      l_reg = scale(add(neg_cosine(p, k_p), neg_cosine(c, k)), S(0.5));
      if (keep_feats) {
        res.feats.p = p;
        res.feats.c = c;
        res.feats.paste_source = composite.paste_source;
        res.feats.canvas_source = composite.canvas_source;
        res.composite = std::move(composite);
      }
    } else {
      l_reg = Tensor<S>::zeros({1});
    }
    if (keep_feats) {
      res.feats.q = q;
      res.feats.k = k;
    }
    return {l_ins, l_reg};
  };

  auto [l_ins, l_reg] = online_dir(batch_q, batch_k, true);
  if (symmetrize) {
    auto [l_ins2, l_reg2] = online_dir(batch_k, batch_q, false);
    l_ins = scale(add(l_ins, l_ins2), S(0.5));
    l_reg = scale(add(l_reg, l_reg2), S(0.5));
  }

  res.l_ins = l_ins;
  res.l_reg = l_reg;
  res.l_total = total_loss(l_ins, l_reg);
  return res;
}

struct StepMetrics {
  long step = 0;
  double lr = 0;
  double l_ins = 0;
  double l_reg = 0;
  double l_total = 0;
};

// One optimization step: augment the raw batch into query/key views, forward,
// backprop, SGD with the cosine schedule, then momentum bookkeeping.
template <typename S>
StepMetrics train_step(ModelState<S>& model, OptimState<S>& opt, QueueState<S>* queue,
                       const ImageBatch& raw, const PipelineConfig& cfg, long step,
                       long total_steps, std::uint64_t aug_seed, Rng& loop_rng) {
  if (raw.n <= 0 || raw.n % 2 != 0)
    throw std::invalid_argument("train_step: batch size must be positive and even");
  cfg.aug.validate();

  auto batch_q = ImageBatch::zeros(raw.n, 3, cfg.aug.out_h, cfg.aug.out_w);
  auto batch_k = ImageBatch::zeros(raw.n, 3, cfg.aug.out_h, cfg.aug.out_w);
  // per-image seeding keeps the views identical for any worker split
  parallel_chunks(raw.n, [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      Rng view_rng(mix_seed(aug_seed, static_cast<std::uint64_t>(step) *
                                          static_cast<std::uint64_t>(raw.n) +
                                      static_cast<std::uint64_t>(j)));
      ImageView src{raw.image(j), raw.ch, raw.h, raw.w};
      make_views(src, cfg.aug, view_rng, batch_q.image(j), batch_k.image(j));
    }
  });

  auto params = trainable_params(model);
  for (auto& p : params) p.zero_grad();

  ForwardResult<S> res;
  if (model.has_momentum_branch()) {
    if (!queue) throw std::invalid_argument("train_step: queue required for this method");
    res = forward_regioncl_m(batch_q, batch_k, model, *queue, cfg.loss, cfg.swap, cfg.pairing,
                             loop_rng);
  } else {
    res = forward_regioncl_s(batch_q, batch_k, model, cfg.swap, cfg.pairing, cfg.symmetrize_s,
                             loop_rng);
  }

  const double l_total = static_cast<double>(res.l_total.data()[0]);
  if (!std::isfinite(l_total))
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step) +
                             " (aug seed " + std::to_string(aug_seed) + ")");

  backward(res.l_total);
  const double lr = cosine_lr(step, total_steps, cfg.lr_base);
  sgd_step(params, opt, lr);
  if (model.has_momentum_branch()) momentum_update(model);

  StepMetrics m;
  m.step = step;
  m.lr = lr;
  m.l_ins = static_cast<double>(res.l_ins.data()[0]);
  m.l_reg = static_cast<double>(res.l_reg.data()[0]);
  m.l_total = l_total;
  return m;
}

}  // namespace regioncl
