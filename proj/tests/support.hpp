#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace testsupport {

// Regularized upper incomplete gamma Q(s, x). Series for x < s + 1,
// Lentz continued fraction otherwise; good to ~1e-10 for the df used here.
inline double gamma_q(double s, double x) {
  if (s <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: need s > 0, x >= 0");
  if (x == 0.0) return 1.0;
  const double lg = std::lgamma(s);
  if (x < s + 1.0) {
    double term = 1.0 / s;
    double sum = term;
    double a = s;
    for (int i = 0; i < 500; ++i) {
      a += 1.0;
      term *= x / a;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + s * std::log(x) - lg);
    return 1.0 - p;
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(-x + s * std::log(x) - lg) * h;
}

// Upper-tail p-value of a chi-square statistic with the given degrees of freedom.
inline double chi2_pvalue(int df, double stat) {
  if (df <= 0) throw std::invalid_argument("chi2_pvalue: df must be positive");
  return gamma_q(0.5 * df, 0.5 * stat);
}

// Pearson statistic against per-cell expected counts.
inline double chi2_stat(const std::vector<std::int64_t>& observed,
                        const std::vector<double>& expected) {
  if (observed.size() != expected.size())
    throw std::invalid_argument("chi2_stat: size mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double diff = static_cast<double>(observed[i]) - expected[i];
    stat += diff * diff / expected[i];
  }
  return stat;
}

}  // namespace testsupport
