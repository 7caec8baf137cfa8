#pragma once

#include "regioncl/tensor.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace regioncl {

template <typename S>
struct OptimState {
  double learning_rate_base = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::vector<S>> velocity;  // one buffer per parameter, matched by position
  long step = 0;
  long total_steps = 0;
};

inline double cosine_lr(long step, long total_steps, double lr_base) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                " outside [0, " + std::to_string(total_steps) + "]");
  return lr_base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                         static_cast<double>(total_steps)));
}

// v <- momentum*v + (grad + wd*param); param <- param - lr*v.
// Parameters without a gradient this step still decay (grad treated as zero).
template <typename S>
void sgd_step(std::vector<Tensor<S>>& params, OptimState<S>& opt, double lr) {
  if (opt.velocity.empty()) {
    opt.velocity.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
      opt.velocity[p].assign(static_cast<std::size_t>(params[p].numel()), S(0));
  }
  if (opt.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: velocity buffer count does not match parameter count");
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    auto& vel = opt.velocity[p];
    if (vel.size() != static_cast<std::size_t>(param.numel()))
      throw std::invalid_argument("sgd_step: velocity shape does not match parameter shape");
    const S m = static_cast<S>(opt.momentum);
    const S wd = static_cast<S>(opt.weight_decay);
    const S step_lr = static_cast<S>(lr);
    S* w = param.data();
    for (std::size_t i = 0; i < vel.size(); ++i) {
      const S g = param.grad_at(static_cast<std::int64_t>(i)) + wd * w[i];
      vel[i] = m * vel[i] + g;
      w[i] -= step_lr * vel[i];
    }
  }
  ++opt.step;
  if (opt.total_steps > 0 && opt.step > opt.total_steps)
    throw std::runtime_error("sgd_step: stepped past total_steps");
}

}  // namespace regioncl
