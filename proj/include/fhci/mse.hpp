#ifndef FHCI_MSE_HPP
#define FHCI_MSE_HPP

#include <cmath>
#include <cstddef>
#include <string>

#include "fhci/error.hpp"
#include "fhci/model.hpp"

namespace fhci {

/// MSE components of the EBLUP for one area at a given A.
///   g1 = A D_i/(A + D_i)
///   g2 = B_i^2 x_i'(X'V^{-1}X)^{-1} x_i
///   g3 = 2 B_i^2 / {(A + D_i) tr(V^{-2})}
struct MseComponents {
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  double a = 0.0;
  double d = 0.0;
  /// x_i'(X'V^{-1}X)^{-1}x_i, kept for the admissibility bound.
  double info_quad = 0.0;
  double trace_v_inv2 = 0.0;

  double blup_mse() const { return g1 + g2; }
  /// Second-order unbiased MSE estimate g1 + g2 + 2 g3.
  double traditional() const { return g1 + g2 + 2.0 * g3; }
  double with_c_star(double c_star) const { return g1 + g2 + c_star * g3; }
};

inline MseComponents mse_components(const GlsSystem& gls, double d_i, std::size_t i) {
  const double a = gls.a();
  const double b = d_i / (a + d_i);
  MseComponents c;
  c.a = a;
  c.d = d_i;
  c.info_quad = gls.info_quad(i);
  c.trace_v_inv2 = gls.trace_v_inv2();
  c.g1 = a * d_i / (a + d_i);
  c.g2 = b * b * c.info_quad;
  c.g3 = 2.0 * b * b / ((a + d_i) * c.trace_v_inv2);
  return c;
}

inline MseComponents mse_components(const SmallAreaDataset& data, double a, std::size_t i) {
  if (i >= data.m()) throw Error("mse_components: area index out of range");
  return mse_components(GlsSystem(data, a), data.d(i), i);
}

/// c* must exceed -(A+D_i)^2 tr(V^{-2})/(2 D_i) * {A + D_i/(A+D_i) x_i'(X'V^{-1}X)^{-1}x_i}
/// for s_i^2 = g1 + g2 + c* g3 to be positive.
inline double c_star_lower_bound(const MseComponents& c) {
  const double apd = c.a + c.d;
  return -(apd * apd) * c.trace_v_inv2 / (2.0 * c.d) * (c.a + c.d / apd * c.info_quad);
}

inline double c_star_lower_bound(const SmallAreaDataset& data, double a, std::size_t i) {
  return c_star_lower_bound(mse_components(data, a, i));
}

/// s_i^2 = g1 + g2 + c* g3; throws AdmissibilityError when c* is at or below the bound.
inline double uncertainty_measure(const MseComponents& c, double c_star) {
  const double bound = c_star_lower_bound(c);
  const double s2 = c.with_c_star(c_star);
  if (!(c_star > bound) || !(s2 > 0.0))
    throw AdmissibilityError("c* = " + std::to_string(c_star) +
                             " is not above the admissible bound " + std::to_string(bound));
  return s2;
}

inline double uncertainty_measure(const SmallAreaDataset& data, double a, std::size_t i,
                                  double c_star) {
  return uncertainty_measure(mse_components(data, a, i), c_star);
}

/// c* that pairs with the NAS factor: (7 - z^2)/4.
inline double nas_c_star(double z) { return (7.0 - z * z) / 4.0; }

}  // namespace fhci

#endif  // FHCI_MSE_HPP
