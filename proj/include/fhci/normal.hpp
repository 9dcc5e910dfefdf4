#ifndef FHCI_NORMAL_HPP
#define FHCI_NORMAL_HPP

#include <cmath>
#include <numbers>

#include "fhci/error.hpp"

namespace fhci::normal {

inline double pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(x), accurate for large x.
inline double upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Standard normal quantile: Abramowitz-Stegun 26.2.23 start, then Halley steps
/// against erfc until the residual is at rounding level.
inline double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile requires p in (0,1)");
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;
  const double t = std::sqrt(-2.0 * std::log(q));
  double x = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                     (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
  x = -x;  // lower-tail quantile of q
  for (int it = 0; it < 8; ++it) {
    const double err = cdf(x) - q;
    const double d = pdf(x);
    if (d <= 0.0) break;
    const double u = err / d;
    const double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
  }
  return upper ? -x : x;
}

}  // namespace fhci::normal

#endif  // FHCI_NORMAL_HPP
