#ifndef FHCI_LIKELIHOOD_HPP
#define FHCI_LIKELIHOOD_HPP

// Residual (REML) log-likelihood of the model variance A and the log-adjustment
// factors that turn it into an adjusted residual likelihood.
//
// The residual log-likelihood is reported without its additive constant:
//   l_RE(A) = -1/2 ln|X'V^{-1}X| - 1/2 ln|V| - 1/2 y'Py.
// The dropped term, -(m-p)/2 ln(2 pi) + 1/2 ln|X'X|, does not depend on A.

#include <cmath>
#include <cstddef>
#include <optional>

#include "fhci/error.hpp"
#include "fhci/model.hpp"

namespace fhci {

/// Data-free log-adjustment log L~(A) and its derivative.
///   NONE      : 0
///   NAS       : ((1+z^2)/4) ln A
///   C_VARIANT : ((1+z^2)/4) ln A + ((7-z^2)/4) ln(A + D_i)
///   REMARK1   : (1/4) ln A
class AdjustmentFactor {
 public:
  static AdjustmentFactor none() { return AdjustmentFactor(EstimatorKind::None, 0.0, 0.0, {}); }
  static AdjustmentFactor nas(double z) { return AdjustmentFactor(EstimatorKind::Nas, z, 0.0, {}); }
  static AdjustmentFactor remark1() {
    return AdjustmentFactor(EstimatorKind::Remark1, 0.0, 0.0, {});
  }
  static AdjustmentFactor c_variant(const SmallAreaDataset& data, std::size_t i, double z) {
    if (i >= data.m()) throw Error("c_variant factor: area index out of range");
    return AdjustmentFactor(EstimatorKind::CVariant, z, data.d(i), i);
  }
  /// C_VARIANT keyed by a sampling variance only (the factor depends on i through D_i).
  static AdjustmentFactor c_variant_for_variance(double d, double z) {
    return AdjustmentFactor(EstimatorKind::CVariant, z, d, {});
  }

  EstimatorKind kind() const noexcept { return kind_; }
  double z() const noexcept { return z_; }
  std::optional<std::size_t> area() const noexcept { return area_; }
  double area_variance() const noexcept { return d_; }

  /// Coefficient of ln A.
  double log_a_power() const noexcept {
    switch (kind_) {
      case EstimatorKind::Nas:
      case EstimatorKind::CVariant: return (1.0 + z_ * z_) / 4.0;
      case EstimatorKind::Remark1: return 0.25;
      case EstimatorKind::None: break;
    }
    return 0.0;
  }

  /// Coefficient of ln(A + D_i); only C_VARIANT has one.
  double log_ad_power() const noexcept {
    return kind_ == EstimatorKind::CVariant ? (7.0 - z_ * z_) / 4.0 : 0.0;
  }

  double log_value(double a) const {
    double v = 0.0;
    if (const double c = log_a_power(); c != 0.0) v += c * std::log(a);
    if (const double c = log_ad_power(); c != 0.0) v += c * std::log(a + d_);
    return v;
  }

  double log_deriv(double a) const {
    double v = 0.0;
    if (const double c = log_a_power(); c != 0.0) v += c / a;
    if (const double c = log_ad_power(); c != 0.0) v += c / (a + d_);
    return v;
  }

  /// log L~(A) -> -inf as A -> 0+ (interior maximizer guaranteed).
  bool vanishes_at_zero() const noexcept { return log_a_power() > 0.0; }

 private:
  AdjustmentFactor(EstimatorKind kind, double z, double d, std::optional<std::size_t> area)
      : kind_(kind), z_(z), d_(d), area_(area) {}

  EstimatorKind kind_;
  double z_;
  double d_;
  std::optional<std::size_t> area_;
};

inline double residual_loglik(const GlsSystem& gls) {
  const double log_det_v = -gls.weights().array().log().sum();
  return -0.5 * gls.log_det_information() - 0.5 * log_det_v - 0.5 * gls.quad_p();
}

inline double residual_loglik(const SmallAreaDataset& data, double a) {
  return residual_loglik(GlsSystem(data, a));
}

/// d/dA l_RE(A) = 1/2 tr((X'V^{-1}X)^{-1}X'V^{-2}X) - 1/2 tr(V^{-1}) + 1/2 y'P^2y.
inline double residual_score(const GlsSystem& gls) {
  return 0.5 * gls.trace_info_inv_xv2x() - 0.5 * gls.weights().sum() + 0.5 * gls.quad_p2();
}

inline double residual_score(const SmallAreaDataset& data, double a) {
  return residual_score(GlsSystem(data, a));
}

/// log L~(A) + l_RE(A).
inline double adjusted_profile(const SmallAreaDataset& data, const AdjustmentFactor& factor,
                               double a) {
  if (factor.vanishes_at_zero() && !(a > 0.0))
    throw DomainError("adjusted profile with a vanishing factor requires A > 0");
  return factor.log_value(a) + residual_loglik(data, a);
}

inline double adjusted_score(const SmallAreaDataset& data, const AdjustmentFactor& factor,
                             double a) {
  if (factor.vanishes_at_zero() && !(a > 0.0))
    throw DomainError("adjusted score with a vanishing factor requires A > 0");
  return factor.log_deriv(a) + residual_score(data, a);
}

/// Two readings of the second-order condition relating a factor to c*.
///   expansion_braces : (A+D_i) l~'(A) + c* - 2 D_i/A, the braces of the
///                      coverage expansion taken literally.
///   structured       : l~'(A) - [(7 - z^2 - 4c*)/(4(A+D_i)) + (1+z^2)/(4A)],
///                      the closed-form adjustment-derivative condition.
/// The two agree only up to an O(1)/(A+D_i) term,
///   structured * (A+D_i) = expansion_braces - 2 - (1+z^2)D_i/(4A) + 2D_i/A,
/// so NAS with c* = (7-z^2)/4 zeroes `structured` but not `expansion_braces`.
struct ScoreEquationResidual {
  double expansion_braces = 0.0;
  double structured = 0.0;
};

inline ScoreEquationResidual score_equation_residual(const AdjustmentFactor& factor, double a,
                                                     double c_star, double d_i, double z) {
  if (!(a > 0.0)) throw DomainError("score equation residual requires A > 0");
  const double deriv = factor.log_deriv(a);
  ScoreEquationResidual r;
  r.expansion_braces = (a + d_i) * deriv + c_star - 2.0 * d_i / a;
  r.structured =
      deriv - ((7.0 - z * z - 4.0 * c_star) / (4.0 * (a + d_i)) + (1.0 + z * z) / (4.0 * a));
  return r;
}

inline ScoreEquationResidual score_equation_residual(const SmallAreaDataset& data,
                                                     const AdjustmentFactor& factor, double a,
                                                     double c_star, std::size_t i, double z) {
  if (i >= data.m()) throw Error("score equation residual: area index out of range");
  return score_equation_residual(factor, a, c_star, data.d(i), z);
}

}  // namespace fhci

#endif  // FHCI_LIKELIHOOD_HPP
