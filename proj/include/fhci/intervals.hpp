#ifndef FHCI_INTERVALS_HPP
#define FHCI_INTERVALS_HPP

// Confidence intervals of the form  xi_i +/- q_i s_i  for the area means theta_i.
//
//   DIRECT    y_i +/- z sqrt(D_i)
//   COX_RE    EBLUP(A_RE) +/- z sqrt(g1)
//   T_RE      EBLUP(A_RE) +/- z sqrt(g1 + g2 + 2 g3)
//   CT_RE     EBLUP(A_RE) +/- q* sqrt(g1 + g2 + 2 g3), q* calibrated (see ct_q_star)
//   NAS0      EBLUP(A_NAS) +/- z sqrt(g1 + g2 + (7 - z^2)/4 g3)
//   C_VARIANT EBLUP(A_i^(c)) +/- z sqrt(g1 + g2)
//   NAS       NAS0 where its s_i^2 < D_i, C_VARIANT otherwise
//   REMARK1   EBLUP(A_R1) +/- z sqrt(g1 + g2 + [7/4 + z^2 D_i/(4 A_R1)] g3)

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fhci/error.hpp"
#include "fhci/estimators.hpp"
#include "fhci/likelihood.hpp"
#include "fhci/model.hpp"
#include "fhci/mse.hpp"
#include "fhci/normal.hpp"

namespace fhci {

struct NominalLevel {
  double alpha = 0.05;
  /// Upper alpha/2 standard normal quantile.
  double z = 0.0;

  static NominalLevel from_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
    return NominalLevel{alpha, normal::quantile(1.0 - alpha / 2.0)};
  }
};

enum class IntervalMethod { Direct, CoxRe, TRe, CtRe, Nas0, CVariant, Nas, Remark1 };

inline constexpr IntervalMethod kAllMethods[] = {
    IntervalMethod::Direct, IntervalMethod::CoxRe,    IntervalMethod::TRe,
    IntervalMethod::CtRe,   IntervalMethod::Nas0,     IntervalMethod::CVariant,
    IntervalMethod::Nas,    IntervalMethod::Remark1};

/// Short name used on the command line and in CSV output.
inline std::string_view method_key(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::Direct: return "direct";
    case IntervalMethod::CoxRe: return "cox";
    case IntervalMethod::TRe: return "t";
    case IntervalMethod::CtRe: return "ct";
    case IntervalMethod::Nas0: return "nas0";
    case IntervalMethod::CVariant: return "c_variant";
    case IntervalMethod::Nas: return "nas";
    case IntervalMethod::Remark1: return "remark1";
  }
  return "?";
}

/// Column label used in rendered tables.
inline std::string_view method_label(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::Direct: return "Direct";
    case IntervalMethod::CoxRe: return "Cox.Re";
    case IntervalMethod::TRe: return "T.Re";
    case IntervalMethod::CtRe: return "CT.Re";
    case IntervalMethod::Nas0: return "NAS0";
    case IntervalMethod::CVariant: return "C.Var";
    case IntervalMethod::Nas: return "NAS";
    case IntervalMethod::Remark1: return "Remark1";
  }
  return "?";
}

inline IntervalMethod parse_method(std::string_view key) {
  for (IntervalMethod m : kAllMethods)
    if (method_key(m) == key) return m;
  throw Error("unknown interval method '" + std::string(key) + "'");
}

enum class NasBranch { Nas0, CVariant };

inline std::string_view branch_key(NasBranch b) {
  return b == NasBranch::Nas0 ? "nas0" : "c_variant";
}

struct IntervalResult {
  std::string area_id;
  IntervalMethod method = IntervalMethod::Direct;
  double center = 0.0;
  double half_width = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<NasBranch> branch;
  /// Variance estimate the interval was built at (0 for DIRECT).
  double a_used = 0.0;
  double q_used = 0.0;
  /// s_i^2.
  double s2 = 0.0;
  /// CT only: calibration had no root in [z/4, 4z], so q* = z.
  bool calibration_fallback = false;
  /// The existence condition for the underlying estimator is not met.
  bool existence_warning = false;
  /// REML estimate was raised to the truncation floor.
  bool truncated = false;

  double length() const { return 2.0 * half_width; }
  bool contains(double theta) const { return lower <= theta && theta <= upper; }
};

namespace detail {

inline IntervalResult make_interval(const SmallAreaDataset& data, std::size_t i,
                                    IntervalMethod method, double center, double q, double s2,
                                    double a_used) {
  IntervalResult r;
  r.area_id = data.area_ids()[i];
  r.method = method;
  r.center = center;
  r.q_used = q;
  r.s2 = s2;
  r.half_width = q * std::sqrt(s2);
  r.lower = center - r.half_width;
  r.upper = center + r.half_width;
  r.a_used = a_used;
  return r;
}

inline double eblup_at(const SmallAreaDataset& data, const GlsSystem& gls, std::size_t i) {
  const double a = gls.a();
  const double b = shrinkage(a, data.d(i));
  const double synthetic = gls.fitted(i);
  if (b == 1.0) return synthetic;
  return (1.0 - b) * data.y(i) + b * synthetic;
}

inline void check_area(const SmallAreaDataset& data, std::size_t i) {
  if (i >= data.m()) throw Error("interval: area index out of range");
}

}  // namespace detail

inline IntervalResult direct_interval(const SmallAreaDataset& data, std::size_t i,
                                      const NominalLevel& level) {
  detail::check_area(data, i);
  return detail::make_interval(data, i, IntervalMethod::Direct, data.y(i), level.z, data.d(i),
                               0.0);
}

/// Plain REML with the truncation rule; shared by the COX/T/CT intervals.
inline VarianceEstimate fit_reml(const SmallAreaDataset& data, const SearchConfig& cfg = {}) {
  return estimate_variance(data, AdjustmentFactor::none(), cfg);
}

inline VarianceEstimate fit_nas(const SmallAreaDataset& data, const NominalLevel& level,
                                const SearchConfig& cfg = {}) {
  return estimate_variance(data, AdjustmentFactor::nas(level.z), cfg);
}

inline VarianceEstimate fit_remark1(const SmallAreaDataset& data, const SearchConfig& cfg = {}) {
  return estimate_variance(data, AdjustmentFactor::remark1(), cfg);
}

inline IntervalResult cox_interval(const SmallAreaDataset& data, const GlsSystem& gls,
                                   std::size_t i, const NominalLevel& level) {
  detail::check_area(data, i);
  const MseComponents c = mse_components(gls, data.d(i), i);
  return detail::make_interval(data, i, IntervalMethod::CoxRe, detail::eblup_at(data, gls, i),
                               level.z, c.g1, gls.a());
}

inline IntervalResult cox_interval(const SmallAreaDataset& data, const VarianceEstimate& reml,
                                   std::size_t i, const NominalLevel& level) {
  IntervalResult r = cox_interval(data, GlsSystem(data, reml.a_hat), i, level);
  r.truncated = reml.truncated;
  return r;
}

inline IntervalResult traditional_interval(const SmallAreaDataset& data, const GlsSystem& gls,
                                           std::size_t i, const NominalLevel& level) {
  detail::check_area(data, i);
  const MseComponents c = mse_components(gls, data.d(i), i);
  return detail::make_interval(data, i, IntervalMethod::TRe, detail::eblup_at(data, gls, i),
                               level.z, uncertainty_measure(c, 2.0), gls.a());
}

inline IntervalResult traditional_interval(const SmallAreaDataset& data,
                                           const VarianceEstimate& reml, std::size_t i,
                                           const NominalLevel& level) {
  IntervalResult r = traditional_interval(data, GlsSystem(data, reml.a_hat), i, level);
  r.truncated = reml.truncated;
  return r;
}

struct CtCalibration {
  double q = 0.0;
  bool fallback = false;
};

/// Percentile q* solving  2 Phi(q) - 1 + q phi(q) (g3/g1) {2 - 2 D_i/A} = 1 - alpha,
/// the coverage expansion with REML's zero adjustment derivative and c* = 2.
/// Safeguarded bisection on [z/4, 4z]; q* = z with fallback = true when no
/// sign change exists there.
inline CtCalibration ct_q_star(const MseComponents& c, const NominalLevel& level) {
  const double z = level.z;
  if (!(c.a > 0.0) || !(c.g1 > 0.0)) return {z, true};
  const double k = (c.g3 / c.g1) * (2.0 - 2.0 * c.d / c.a);
  if (k == 0.0) return {z, false};
  const double target = 1.0 - level.alpha;
  auto f = [&](double q) {
    return (1.0 - 2.0 * normal::upper_tail(q)) + q * normal::pdf(q) * k - target;
  };
  double lo = z / 4.0;
  double hi = 4.0 * z;
  double flo = f(lo);
  const double fhi = f(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi) || (flo < 0.0) == (fhi < 0.0)) return {z, true};
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), false};
}

inline IntervalResult ct_interval(const SmallAreaDataset& data, const GlsSystem& gls,
                                  std::size_t i, const NominalLevel& level) {
  detail::check_area(data, i);
  const MseComponents c = mse_components(gls, data.d(i), i);
  const CtCalibration cal = ct_q_star(c, level);
  IntervalResult r = detail::make_interval(data, i, IntervalMethod::CtRe,
                                           detail::eblup_at(data, gls, i), cal.q,
                                           uncertainty_measure(c, 2.0), gls.a());
  r.calibration_fallback = cal.fallback;
  return r;
}

inline IntervalResult ct_interval(const SmallAreaDataset& data, const VarianceEstimate& reml,
                                  std::size_t i, const NominalLevel& level) {
  IntervalResult r = ct_interval(data, GlsSystem(data, reml.a_hat), i, level);
  r.truncated = reml.truncated;
  return r;
}

inline IntervalResult nas0_interval(const SmallAreaDataset& data, const GlsSystem& gls,
                                    std::size_t i, const NominalLevel& level) {
  detail::check_area(data, i);
  const MseComponents c = mse_components(gls, data.d(i), i);
  return detail::make_interval(data, i, IntervalMethod::Nas0, detail::eblup_at(data, gls, i),
                               level.z, uncertainty_measure(c, nas_c_star(level.z)), gls.a());
}

inline IntervalResult nas0_interval(const SmallAreaDataset& data, const VarianceEstimate& nas,
                                    std::size_t i, const NominalLevel& level) {
  IntervalResult r = nas0_interval(data, GlsSystem(data, nas.a_hat), i, level);
  r.existence_warning = !nas.existence_condition_met;
  return r;
}

/// Per-area C_VARIANT estimate A_i^(c).
inline VarianceEstimate fit_c_variant(const SmallAreaDataset& data, std::size_t i,
                                      const NominalLevel& level, const SearchConfig& cfg = {}) {
  return estimate_variance(data, AdjustmentFactor::c_variant(data, i, level.z), cfg);
}

inline IntervalResult c_variant_interval(const SmallAreaDataset& data,
                                         const VarianceEstimate& est, std::size_t i,
                                         const NominalLevel& level) {
  detail::check_area(data, i);
  const GlsSystem gls(data, est.a_hat);
  const MseComponents c = mse_components(gls, data.d(i), i);
  IntervalResult r =
      detail::make_interval(data, i, IntervalMethod::CVariant, detail::eblup_at(data, gls, i),
                            level.z, uncertainty_measure(c, 0.0), gls.a());
  r.existence_warning = !est.existence_condition_met;
  return r;
}

inline IntervalResult c_variant_interval(const SmallAreaDataset& data, std::size_t i,
                                         const NominalLevel& level,
                                         const SearchConfig& cfg = {}) {
  return c_variant_interval(data, fit_c_variant(data, i, level, cfg), i, level);
}

/// Branching interval given the (dataset-wide) NAS estimate.
inline IntervalResult nas_interval(const SmallAreaDataset& data, const VarianceEstimate& nas,
                                   const GlsSystem& nas_gls, std::size_t i,
                                   const NominalLevel& level, const SearchConfig& cfg = {}) {
  detail::check_area(data, i);
  const MseComponents c = mse_components(nas_gls, data.d(i), i);
  IntervalResult r;
  if (c.with_c_star(nas_c_star(level.z)) < data.d(i)) {
    r = nas0_interval(data, nas_gls, i, level);
    r.existence_warning = !nas.existence_condition_met;
    r.branch = NasBranch::Nas0;
  } else {
    r = c_variant_interval(data, i, level, cfg);
    r.branch = NasBranch::CVariant;
    r.existence_warning = r.existence_warning || !nas.existence_condition_met;
  }
  r.method = IntervalMethod::Nas;
  return r;
}

inline IntervalResult nas_interval(const SmallAreaDataset& data, const VarianceEstimate& nas,
                                   std::size_t i, const NominalLevel& level,
                                   const SearchConfig& cfg = {}) {
  return nas_interval(data, nas, GlsSystem(data, nas.a_hat), i, level, cfg);
}

inline IntervalResult nas_interval(const SmallAreaDataset& data, std::size_t i,
                                   const NominalLevel& level, const SearchConfig& cfg = {}) {
  return nas_interval(data, fit_nas(data, level, cfg), i, level, cfg);
}

/// NAS intervals for every area from a single NAS optimization.
inline std::vector<IntervalResult> nas_intervals(const SmallAreaDataset& data,
                                                 const NominalLevel& level,
                                                 const SearchConfig& cfg = {}) {
  const VarianceEstimate nas = fit_nas(data, level, cfg);
  const GlsSystem gls(data, nas.a_hat);
  std::vector<IntervalResult> out;
  out.reserve(data.m());
  for (std::size_t i = 0; i < data.m(); ++i)
    out.push_back(nas_interval(data, nas, gls, i, level, cfg));
  return out;
}

inline IntervalResult remark1_interval(const SmallAreaDataset& data, const VarianceEstimate& est,
                                       std::size_t i, const NominalLevel& level) {
  detail::check_area(data, i);
  const GlsSystem gls(data, est.a_hat);
  const MseComponents c = mse_components(gls, data.d(i), i);
  const double z2 = level.z * level.z;
  const double c_star = 1.75 + z2 * data.d(i) / (4.0 * est.a_hat);
  IntervalResult r =
      detail::make_interval(data, i, IntervalMethod::Remark1, detail::eblup_at(data, gls, i),
                            level.z, uncertainty_measure(c, c_star), gls.a());
  r.existence_warning = !est.existence_condition_met;
  return r;
}

/// Second-order coverage prediction
///   1 - alpha + z phi(z) (g3/g1) * braces,
/// evaluated with both readings of the braces (see ScoreEquationResidual):
/// the literal expansion braces (A+D_i) l~'(A) + c* - 2 D_i/A, and the
/// structured form (A+D_i) * [l~'(A) - (7 - z^2 - 4c*)/(4(A+D_i)) - (1+z^2)/(4A)].
struct CoverageExpansion {
  double leading_coefficient = 0.0;  // z phi(z) g3 / g1
  double braces = 0.0;
  double structured_braces = 0.0;
  double predicted_coverage = 0.0;
  double predicted_coverage_structured = 0.0;
};

inline CoverageExpansion coverage_expansion_diagnostic(const SmallAreaDataset& data,
                                                       const AdjustmentFactor& factor, double a,
                                                       std::size_t i, double c_star,
                                                       const NominalLevel& level) {
  if (!(a > 0.0)) throw DomainError("coverage expansion requires A > 0");
  detail::check_area(data, i);
  const MseComponents c = mse_components(data, a, i);
  const ScoreEquationResidual res = score_equation_residual(factor, a, c_star, c.d, level.z);
  CoverageExpansion out;
  out.leading_coefficient = level.z * normal::pdf(level.z) * c.g3 / c.g1;
  out.braces = res.expansion_braces;
  out.structured_braces = (a + c.d) * res.structured;
  out.predicted_coverage = 1.0 - level.alpha + out.leading_coefficient * out.braces;
  out.predicted_coverage_structured =
      1.0 - level.alpha + out.leading_coefficient * out.structured_braces;
  return out;
}

}  // namespace fhci

#endif  // FHCI_INTERVALS_HPP
