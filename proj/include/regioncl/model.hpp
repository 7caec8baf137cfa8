#pragma once

#include "regioncl/layers.hpp"

#include <functional>
#include <string>
#include <vector>

namespace regioncl {

template <typename S>
struct Stack {
  std::vector<Layer<S>> layers;
};

template <typename S>
Tensor<S> stack_apply(Stack<S>& stack, Tensor<S> x, Mode mode) {
  for (auto& layer : stack.layers) x = layer_apply(layer, x, mode);
  return x;
}

// Encoder: three stages of stride-2 + stride-1 convs, channels 24/48/96, so the
// feature map is the input downsampled by 8. Two convs per stage push the final
// receptive field past the largest rendered shape; a single-conv stage tops out
// at 15 px, which is smaller than the objects it must summarize. Emits the map
// itself; pooling is the caller's choice.
template <typename S>
Stack<S> build_encoder(Rng& rng) {
  Stack<S> s;
  int in = 3;
  for (int out : {24, 48, 96}) {
    s.layers.push_back(make_layer<S>(LayerSpec::conv(in, out, 3, 2, 1), rng));
    s.layers.push_back(make_layer<S>(LayerSpec::batchnorm(out), rng));
    s.layers.push_back(make_layer<S>(LayerSpec::relu_(), rng));
    s.layers.push_back(make_layer<S>(LayerSpec::conv(out, out, 3, 1, 1), rng));
    s.layers.push_back(make_layer<S>(LayerSpec::batchnorm(out), rng));
    s.layers.push_back(make_layer<S>(LayerSpec::relu_(), rng));
    in = out;
  }
  return s;
}

inline constexpr int kEncoderDim = 96;     // channels of the final feature map
inline constexpr int kEncoderRatio = 8;    // input-to-feature-map downsampling
inline constexpr int kProjectorDim = 32;   // contrastive feature dimension

template <typename S>
Stack<S> build_projector(Rng& rng) {
  Stack<S> s;
  s.layers.push_back(make_layer<S>(LayerSpec::lin(kEncoderDim, kEncoderDim), rng));
  s.layers.push_back(make_layer<S>(LayerSpec::relu_(), rng));
  s.layers.push_back(make_layer<S>(LayerSpec::lin(kEncoderDim, kProjectorDim), rng));
  return s;
}

template <typename S>
Stack<S> build_predictor(Rng& rng) {
  Stack<S> s;
  s.layers.push_back(make_layer<S>(LayerSpec::lin(kProjectorDim, kProjectorDim / 2), rng));
  s.layers.push_back(make_layer<S>(LayerSpec::relu_(), rng));
  s.layers.push_back(make_layer<S>(LayerSpec::lin(kProjectorDim / 2, kProjectorDim), rng));
  return s;
}

template <typename S>
Stack<S> clone_stack(const Stack<S>& src, bool requires_grad) {
  Stack<S> dst;
  dst.layers.reserve(src.layers.size());
  for (const auto& layer : src.layers) {
    Layer<S> copy;
    copy.spec = layer.spec;
    for (const auto& p : layer.params) {
      auto t = Tensor<S>::from_data(p.shape(), p.vec());
      t.set_requires_grad(requires_grad);
      copy.params.push_back(t);
    }
    copy.running_mean = layer.running_mean;
    copy.running_var = layer.running_var;
    dst.layers.push_back(std::move(copy));
  }
  return dst;
}

enum class Method { regioncl_m, regioncl_s, moco_baseline, simsiam_baseline };

// Online encoder/projector (+predictor for the SimSiam-style variants) and, for
// the queue-based variants, momentum shadows that the optimizer never touches.
template <typename S>
struct ModelState {
  Method method = Method::regioncl_m;
  Stack<S> encoder, projector, predictor;
  Stack<S> m_encoder, m_projector;
  double momentum_m = 0.999;

  bool has_momentum_branch() const {
    return method == Method::regioncl_m || method == Method::moco_baseline;
  }
  bool has_predictor() const {
    return method == Method::regioncl_s || method == Method::simsiam_baseline;
  }
};

template <typename S>
ModelState<S> build_model(Method method, double momentum_m, Rng& rng) {
  ModelState<S> m;
  m.method = method;
  m.momentum_m = momentum_m;
  m.encoder = build_encoder<S>(rng);
  m.projector = build_projector<S>(rng);
  if (m.has_predictor()) m.predictor = build_predictor<S>(rng);
  if (m.has_momentum_branch()) {
    m.m_encoder = clone_stack(m.encoder, false);
    m.m_projector = clone_stack(m.projector, false);
  }
  return m;
}

namespace detail {
inline const char* param_name(LayerKind kind, std::size_t index) {
  switch (kind) {
    case LayerKind::conv2d:
      return "weight";
    case LayerKind::batchnorm2d:
      return index == 0 ? "gamma" : "beta";
    case LayerKind::linear:
      return index == 0 ? "weight" : "bias";
    default:
      return "param";
  }
}
}  // namespace detail

// Definition-order walk over every parameter tensor, with stable names like
// "encoder.0.weight". Used by the optimizer, checkpoints, and momentum updates.
template <typename S>
void visit_stack_params(Stack<S>& stack, const std::string& prefix,
                        const std::function<void(const std::string&, Tensor<S>&)>& fn) {
  for (std::size_t li = 0; li < stack.layers.size(); ++li)
    for (std::size_t pi = 0; pi < stack.layers[li].params.size(); ++pi)
      fn(prefix + "." + std::to_string(li) + "." +
             detail::param_name(stack.layers[li].spec.kind, pi),
         stack.layers[li].params[pi]);
}

template <typename S>
void visit_stack_buffers(Stack<S>& stack, const std::string& prefix,
                         const std::function<void(const std::string&, std::vector<S>&)>& fn) {
  for (std::size_t li = 0; li < stack.layers.size(); ++li)
    if (stack.layers[li].spec.kind == LayerKind::batchnorm2d) {
      fn(prefix + "." + std::to_string(li) + ".running_mean", stack.layers[li].running_mean);
      fn(prefix + "." + std::to_string(li) + ".running_var", stack.layers[li].running_var);
    }
}

template <typename S>
void visit_params(ModelState<S>& m,
                  const std::function<void(const std::string&, Tensor<S>&)>& fn) {
  visit_stack_params(m.encoder, "encoder", fn);
  visit_stack_params(m.projector, "projector", fn);
  if (m.has_predictor()) visit_stack_params(m.predictor, "predictor", fn);
  if (m.has_momentum_branch()) {
    visit_stack_params(m.m_encoder, "m_encoder", fn);
    visit_stack_params(m.m_projector, "m_projector", fn);
  }
}

template <typename S>
void visit_buffers(ModelState<S>& m,
                   const std::function<void(const std::string&, std::vector<S>&)>& fn) {
  visit_stack_buffers(m.encoder, "encoder", fn);
  visit_stack_buffers(m.projector, "projector", fn);
  if (m.has_predictor()) visit_stack_buffers(m.predictor, "predictor", fn);
  if (m.has_momentum_branch()) {
    visit_stack_buffers(m.m_encoder, "m_encoder", fn);
    visit_stack_buffers(m.m_projector, "m_projector", fn);
  }
}

// The tensors the optimizer owns, in definition order.
template <typename S>
std::vector<Tensor<S>> trainable_params(ModelState<S>& m) {
  std::vector<Tensor<S>> out;
  auto grab = [&out](const std::string&, Tensor<S>& t) { out.push_back(t); };
  visit_stack_params<S>(m.encoder, "encoder", grab);
  visit_stack_params<S>(m.projector, "projector", grab);
  if (m.has_predictor()) visit_stack_params<S>(m.predictor, "predictor", grab);
  return out;
}

// theta_m <- m*theta_m + (1-m)*theta_online for the shadow encoder and projector.
// Batchnorm running stats are not mixed; each branch keeps its own.
template <typename S>
void momentum_update(ModelState<S>& model) {
  if (!model.has_momentum_branch())
    throw std::logic_error("momentum_update: model has no momentum branch");
  const S m = static_cast<S>(model.momentum_m);
  auto blend = [m](Stack<S>& online, Stack<S>& shadow, const char* what) {
    if (online.layers.size() != shadow.layers.size())
      throw std::invalid_argument(std::string("momentum_update: ") + what + " stack shape drift");
    for (std::size_t li = 0; li < online.layers.size(); ++li) {
      auto& ol = online.layers[li];
      auto& sl = shadow.layers[li];
      if (ol.params.size() != sl.params.size())
        throw std::invalid_argument(std::string("momentum_update: ") + what +
                                    " parameter count drift");
      for (std::size_t pi = 0; pi < ol.params.size(); ++pi) {
        if (ol.params[pi].shape() != sl.params[pi].shape())
          throw std::invalid_argument(std::string("momentum_update: ") + what +
                                      " parameter shape drift");
        S* dst = sl.params[pi].data();
        const S* src = ol.params[pi].data();
        for (std::int64_t i = 0; i < ol.params[pi].numel(); ++i)
          dst[i] = m * dst[i] + (S(1) - m) * src[i];
      }
    }
  };
  blend(model.encoder, model.m_encoder, "encoder");
  blend(model.projector, model.m_projector, "projector");
}

}  // namespace regioncl
