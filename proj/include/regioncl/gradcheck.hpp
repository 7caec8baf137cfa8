#pragma once

#include "regioncl/tensor.hpp"

#include <cmath>
#include <functional>

namespace regioncl {

// Central finite differences against the recorded backward pass, 64-bit only.
// Returns max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x, double h = 1e-4) {
  auto probe = Tensor<double>::from_data(x.shape(), x.vec());
  probe.set_requires_grad(true);
  auto loss = f(probe);
  if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  if (!std::isfinite(loss.data()[0]))
    throw std::runtime_error("grad_check: non-finite loss at the probe point");
  backward(loss);

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double analytic = probe.grad_at(i);
    auto eval_at = [&](double delta) {
      auto shifted = Tensor<double>::from_data(x.shape(), x.vec());
      shifted.data()[i] += delta;
      NoGradGuard no_grad;
      auto y = f(shifted);
      const double v = y.data()[0];
      if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite value during probing");
      return v;
    };
    const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
    const double err = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace regioncl
