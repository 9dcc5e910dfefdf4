#ifndef FHCI_ESTIMATORS_HPP
#define FHCI_ESTIMATORS_HPP

// Maximizers of the (adjusted) residual likelihood over A.
//
// Strategy: evaluate the log-profile on a log-spaced grid over (0, A_max] (plus
// A = 0 for plain REML), take the first grid maximum, golden-section it inside
// the neighbouring bracket, then polish with bisection on the analytic score.
// Existence of an interior maximum is proved only in general, not unimodality,
// so the grid is what makes the search safe.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fhci/error.hpp"
#include "fhci/likelihood.hpp"
#include "fhci/model.hpp"
#include "fhci/rng.hpp"

namespace fhci {

struct SearchConfig {
  /// Upper end of the search; unset means 100 * (max_i D_i + sample variance of y).
  std::optional<double> a_max;
  double abs_tol = 1e-8;
  int max_iter = 200;
  int grid_points = 200;
  /// Plain REML estimates below this value are raised to it.
  double truncation_floor = 0.01;

  void validate() const {
    if (!(abs_tol > 0.0)) throw Error("search config: abs_tol must be positive");
    if (max_iter < 1) throw Error("search config: max_iter must be positive");
    if (grid_points < 3) throw Error("search config: grid_points must be at least 3");
    if (!(truncation_floor >= 0.0)) throw Error("search config: truncation_floor must be >= 0");
    if (a_max && !(*a_max > truncation_floor))
      throw Error("search config: A_max must exceed truncation_floor");
  }
};

inline double default_a_max(const SmallAreaDataset& data) {
  const Vector& y = data.y();
  double var = 0.0;
  if (data.m() > 1) {
    const double mean = y.mean();
    var = (y.array() - mean).square().sum() / static_cast<double>(data.m() - 1);
  }
  return 100.0 * (data.d().maxCoeff() + var);
}

struct VarianceEstimate {
  double a_hat = 0.0;
  EstimatorKind method = EstimatorKind::None;
  bool converged = false;
  /// REML only: the maximizer fell below the truncation floor.
  bool truncated = false;
  /// The maximizer sits at A_max (existence condition likely violated).
  bool at_upper_bound = false;
  /// Existence predicate for this estimator and (m, p, z).
  bool existence_condition_met = true;
  double objective_at_opt = 0.0;
  int iterations = 0;
};

/// m > p + (1+z^2)/2.
inline bool nas_existence_holds(std::size_t m, std::size_t p, double z) {
  return static_cast<double>(m) > static_cast<double>(p) + (1.0 + z * z) / 2.0;
}

/// m > p + 4.
inline bool c_variant_existence_holds(std::size_t m, std::size_t p) { return m > p + 4; }

/// m > p + 1/2: the A^{1/4} factor beats the O(A^{-(m-p)/2}) decay of L_RE.
inline bool remark1_existence_holds(std::size_t m, std::size_t p) {
  return static_cast<double>(m) > static_cast<double>(p) + 0.5;
}

inline bool existence_holds(const AdjustmentFactor& factor, std::size_t m, std::size_t p) {
  switch (factor.kind()) {
    case EstimatorKind::Nas: return nas_existence_holds(m, p, factor.z());
    case EstimatorKind::CVariant: return c_variant_existence_holds(m, p);
    case EstimatorKind::Remark1: return remark1_existence_holds(m, p);
    case EstimatorKind::None: break;
  }
  return true;
}

namespace detail {

constexpr double kInvPhi = 0.6180339887498949;  // (sqrt(5) - 1) / 2

struct GoldenResult {
  double x;
  double fx;
  double lo;
  double hi;
  int iterations;
};

/// Golden-section maximization of f on [lo, hi] until hi - lo <= tol.
/// Ties resolve to the left (smaller A).
template <typename F>
GoldenResult golden_maximize(F&& f, double lo, double hi, double tol, int max_iter) {
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  int it = 0;
  while (hi - lo > tol) {
    if (it >= max_iter)
      throw EstimationError("golden-section search did not converge within max_iter", lo, hi);
    ++it;
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 >= f2 ? GoldenResult{x1, f1, lo, hi, it} : GoldenResult{x2, f2, lo, hi, it};
}

}  // namespace detail

/// Maximizer of log L~(A) + l_RE(A) over (0, A_max] ([0, A_max] for plain REML).
inline VarianceEstimate estimate_variance(const SmallAreaDataset& data,
                                          const AdjustmentFactor& factor,
                                          const SearchConfig& cfg = {}) {
  cfg.validate();
  const double a_max = cfg.a_max.value_or(default_a_max(data));
  const bool open_at_zero = factor.vanishes_at_zero();

  auto objective = [&](double a) { return adjusted_profile(data, factor, a); };
  auto score = [&](double a) { return adjusted_score(data, factor, a); };

  // Grid: log-spaced over [a_max * 1e-10, a_max]; plain REML also tries A = 0.
  const int n = cfg.grid_points;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n) + 1);
  if (!open_at_zero) grid.push_back(0.0);
  const double log_lo = std::log(a_max * 1e-10);
  const double log_hi = std::log(a_max);
  for (int k = 0; k < n; ++k)
    grid.push_back(std::exp(log_lo + (log_hi - log_lo) * k / (n - 1)));
  grid.back() = a_max;

  std::size_t best = 0;
  double best_f = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double f = objective(grid[k]);
    if (f > best_f) {
      best_f = f;
      best = k;
    }
  }

  const double lo = best == 0 ? (open_at_zero ? grid[0] * 0.5 : grid[0]) : grid[best - 1];
  const double hi = best + 1 < grid.size() ? grid[best + 1] : grid.back();

  VarianceEstimate est;
  est.method = factor.kind();
  est.existence_condition_met = existence_holds(factor, data.m(), data.p());

  // Golden-section narrows the bracket to where objective differences are
  // still resolvable; the score bisection then supplies the last digits.
  const double coarse_tol = std::max(cfg.abs_tol, 1e-6 * (1.0 + grid[best]));
  const auto g = detail::golden_maximize(objective, lo, hi, coarse_tol, cfg.max_iter);
  double a_hat = g.x;
  double f_hat = g.fx;
  int iterations = g.iterations;
  if (best_f > f_hat) {  // grid point beat the golden result (flat bracket)
    a_hat = grid[best];
    f_hat = best_f;
  }

  double blo = std::max(g.lo - coarse_tol, lo);
  double bhi = std::min(g.hi + coarse_tol, hi);
  if (blo < bhi) {
    const double s_lo = score(blo);
    const double s_hi = score(bhi);
    if (s_lo > 0.0 && s_hi < 0.0) {
      const double fine_tol = 1e-3 * cfg.abs_tol;
      while (bhi - blo > fine_tol) {
        if (iterations >= cfg.max_iter)
          throw EstimationError("score bisection did not converge within max_iter", blo, bhi);
        ++iterations;
        const double mid = 0.5 * (blo + bhi);
        if (mid <= blo || mid >= bhi) break;  // bracket at floating-point resolution
        if (score(mid) > 0.0) blo = mid;
        else bhi = mid;
      }
      const double root = 0.5 * (blo + bhi);
      const double f_root = objective(root);
      // Accept unless clearly worse (objective resolution is ~1e-15 relative).
      if (f_root >= f_hat - 1e-12 * (1.0 + std::abs(f_hat))) {
        a_hat = root;
        f_hat = f_root;
      }
    }
  }

  est.converged = true;
  est.iterations = iterations;
  est.at_upper_bound = a_hat >= a_max * (1.0 - 1e-9);
  if (factor.kind() == EstimatorKind::None && a_hat < cfg.truncation_floor) {
    a_hat = cfg.truncation_floor;
    f_hat = objective(a_hat);
    est.truncated = true;
  }
  est.a_hat = a_hat;
  est.objective_at_opt = f_hat;
  return est;
}

/// y'My with M = I - X(X'X)^{-1}X'.
inline double ols_residual_ss(const SmallAreaDataset& data) {
  const Matrix& x = data.x();
  const Vector coef = x.colPivHouseholderQr().solve(data.y());
  return (data.y() - x * coef).squaredNorm();
}

/// Positive root of the balanced-case NAS score quadratic
///   -2{m - p - (1+z^2)/2} A^2 + 2{y'My - (m-p-1-z^2) D} A + (1+z^2) D^2 = 0.
inline double balanced_nas_root(double ymy, std::size_t m, std::size_t p, double d, double z) {
  const double k = 1.0 + z * z;
  const double mp = static_cast<double>(m) - static_cast<double>(p);
  const double qa = -2.0 * (mp - k / 2.0);
  const double qb = 2.0 * (ymy - (mp - k) * d);
  const double qc = k * d * d;
  if (!(qa < 0.0)) throw DomainError("balanced NAS root requires m > p + (1+z^2)/2");
  const double disc = qb * qb - 4.0 * qa * qc;
  const double sq = std::sqrt(disc);
  // Stable quadratic formula; qa < 0 < qc so exactly one root is positive.
  if (qb >= 0.0) {
    const double q = -0.5 * (qb + sq);
    return q / qa;
  }
  const double q = -0.5 * (qb - sq);
  return qc / q;
}

inline double balanced_nas_closed_form(const SmallAreaDataset& data, double z) {
  if (!data.balanced()) throw Error("balanced_nas_closed_form requires equal D_i");
  return balanced_nas_root(ols_residual_ss(data), data.m(), data.p(), data.d(0), z);
}

struct MomentDiagnostics {
  std::size_t replicates = 0;
  std::size_t failures = 0;
  double bias = 0.0;
  double bias_se = 0.0;
  /// Sample variance of A_hat across replicates.
  double variance = 0.0;
  double variance_se = 0.0;
  /// Mean of (A_hat - A)^2.
  double mean_sq_dev = 0.0;
  double mean_sq_dev_se = 0.0;
  /// (2 / tr V^{-2}) * l~'(A); area-specific factors use their own D_i.
  double predicted_bias = 0.0;
  /// 2 / tr V^{-2}.
  double predicted_variance = 0.0;
};

/// Monte Carlo bias and spread of a variance estimator at A_true with beta held at
/// the GLS fit. Replicate r draws from stream r of `seed`; results do not depend
/// on the thread count.
inline MomentDiagnostics moment_diagnostics(const SmallAreaDataset& data,
                                            const AdjustmentFactor& factor, double a_true,
                                            std::size_t n_reps, std::uint64_t seed,
                                            const SearchConfig& cfg = {}, int threads = 0) {
  if (n_reps < 100) throw Error("moment_diagnostics requires at least 100 replicates");
  if (!(a_true > 0.0)) throw DomainError("moment_diagnostics requires A_true > 0");
  const Vector beta = gls_beta(data, a_true);
  const Vector mean = data.x() * beta;
  const auto m = static_cast<Eigen::Index>(data.m());

  std::vector<double> a_hats(n_reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(n_reps, resolve_threads(threads), [&](std::size_t r) {
    Vector y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      RandomStream rs(seed, r, static_cast<std::uint32_t>(i));
      const double theta = mean(i) + std::sqrt(a_true) * rs.normal();
      y(i) = theta + std::sqrt(data.d()(i)) * rs.normal();
    }
    try {
      a_hats[r] = estimate_variance(data.with_y(std::move(y)), factor, cfg).a_hat;
    } catch (const Error&) {
    }
  });

  MomentDiagnostics out;
  std::vector<double> ok;
  ok.reserve(n_reps);
  for (double a : a_hats) {
    if (std::isnan(a)) ++out.failures;
    else ok.push_back(a);
  }
  const auto n = static_cast<double>(ok.size());
  out.replicates = ok.size();
  if (ok.size() < 2) throw Error("moment_diagnostics: too few successful replicates");

  double sum = 0.0;
  for (double a : ok) sum += a;
  const double mean_a = sum / n;
  double m2 = 0.0, m4 = 0.0, sq = 0.0, sq2 = 0.0;
  for (double a : ok) {
    const double c = a - mean_a;
    m2 += c * c;
    m4 += c * c * c * c;
    const double dev2 = (a - a_true) * (a - a_true);
    sq += dev2;
    sq2 += dev2 * dev2;
  }
  const double var = m2 / (n - 1.0);
  out.bias = mean_a - a_true;
  out.bias_se = std::sqrt(var / n);
  out.variance = var;
  out.variance_se = std::sqrt(std::max(0.0, m4 / n - (m2 / n) * (m2 / n)) / n);
  out.mean_sq_dev = sq / n;
  out.mean_sq_dev_se = std::sqrt(std::max(0.0, sq2 / n - out.mean_sq_dev * out.mean_sq_dev) / n);

  const double tr_v2 = (data.d().array() + a_true).inverse().square().sum();
  out.predicted_variance = 2.0 / tr_v2;
  out.predicted_bias = out.predicted_variance * factor.log_deriv(a_true);
  return out;
}

}  // namespace fhci

#endif  // FHCI_ESTIMATORS_HPP
