#pragma once

#include <cmath>

#include "swsteer/errors.hpp"

namespace swsteer {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  // erfc keeps full relative accuracy in the lower tail.
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

/// Standard normal quantile. Hastings' rational approximation polished by
/// three Halley iterations; accurate to a few ulp over (1e-300, 1-1e-16).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: p must lie strictly inside (0,1)");
  }
  if (p == 0.5) return 0.0;
  const bool upper = p > 0.5;
  const double u = upper ? 1.0 - p : p;

  const double t = std::sqrt(-2.0 * std::log(u));
  double x = t - (2.515517 + t * (0.802853 + t * 0.010328)) /
                     (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308)));
  x = -x;  // lower-tail quantile

  for (int iter = 0; iter < 3; ++iter) {
    const double err = normal_cdf(x) - u;
    const double pdf = normal_pdf(x);
    if (pdf <= 0.0) break;  // extreme tail: keep the rational estimate
    const double dx = err / pdf;
    x -= dx / (1.0 + 0.5 * x * dx);  // Halley step, f''/f' = -x
  }
  return upper ? -x : x;
}

}  // namespace swsteer
