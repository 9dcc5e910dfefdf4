#ifndef FHCI_MODEL_HPP
#define FHCI_MODEL_HPP

// Fay-Herriot area-level model:
//   y_i | theta_i ~ N(theta_i, D_i),   theta_i ~ N(x_i' beta, A),
// with D_i known. V = diag(A + D_i) is only ever stored as its diagonal.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fhci/error.hpp"

namespace fhci {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Direct estimates, known sampling variances and covariates for m areas.
/// Immutable after construction; the constructor enforces D_i > 0 and rank(X) = p.
class SmallAreaDataset {
 public:
  SmallAreaDataset(std::vector<std::string> area_ids, Vector y, Vector d, Matrix x,
                   std::vector<std::string> covariate_names = {})
      : ids_(std::move(area_ids)),
        y_(std::move(y)),
        d_(std::move(d)),
        x_(std::move(x)),
        names_(std::move(covariate_names)) {
    validate();
  }

  /// Convenience constructor with ids "1".."m".
  SmallAreaDataset(Vector y, Vector d, Matrix x)
      : ids_(default_ids(y.size())), y_(std::move(y)), d_(std::move(d)), x_(std::move(x)) {
    validate();
  }

  std::size_t m() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  const Vector& y() const noexcept { return y_; }
  const Vector& d() const noexcept { return d_; }
  const Matrix& x() const noexcept { return x_; }
  const std::vector<std::string>& area_ids() const noexcept { return ids_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  double y(std::size_t i) const { return y_(static_cast<Eigen::Index>(i)); }
  double d(std::size_t i) const { return d_(static_cast<Eigen::Index>(i)); }
  auto x_row(std::size_t i) const { return x_.row(static_cast<Eigen::Index>(i)); }

  bool balanced() const {
    return (d_.array() == d_(0)).all();
  }

  /// Same design and variances, new direct estimates.
  SmallAreaDataset with_y(Vector y) const {
    SmallAreaDataset out = *this;
    if (y.size() != y_.size()) throw Error("with_y: length mismatch");
    out.y_ = std::move(y);
    return out;
  }

 private:
  static std::vector<std::string> default_ids(Eigen::Index m) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) ids.push_back(std::to_string(i + 1));
    return ids;
  }

  void validate() {
    const auto m = y_.size();
    if (m < 1) throw Error("dataset must contain at least one area");
    if (x_.cols() < 1) throw Error("dataset must have at least one covariate");
    if (d_.size() != m || x_.rows() != m || static_cast<Eigen::Index>(ids_.size()) != m)
      throw Error("dataset: y, D, X and area ids must have m entries");
    if (names_.empty()) {
      for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    } else if (static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
      throw Error("dataset: covariate name count does not match p");
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!std::isfinite(y_(i))) throw Error("dataset: non-finite y for area " + ids_[i]);
      if (!(d_(i) > 0.0) || !std::isfinite(d_(i)))
        throw Error("dataset: sampling variance D must be positive for area " + ids_[i]);
    }
    if (!x_.allFinite()) throw Error("dataset: non-finite covariate value");
    check_rank();
  }

  void check_rank() const {
    Eigen::ColPivHouseholderQR<Matrix> qr(x_);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank == x_.cols()) return;
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = rank; k < x_.cols(); ++k) {
      if (!cols.empty()) cols += ", ";
      cols += names_[static_cast<std::size_t>(perm(k))];
    }
    throw RankDeficiencyError("design matrix has rank " + std::to_string(rank) + " < p = " +
                              std::to_string(x_.cols()) + "; dependent column(s): " + cols);
  }

  std::vector<std::string> ids_;
  Vector y_;
  Vector d_;
  Matrix x_;
  std::vector<std::string> names_;
};

/// GLS quantities of the model at a fixed A: weights 1/(A+D_i), the information
/// X'V^{-1}X and its factorization, beta-tilde(A) and the V^{-1}-scaled residuals.
class GlsSystem {
 public:
  GlsSystem(const SmallAreaDataset& data, double a) : data_(&data), a_(a) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("GLS requires finite A >= 0");
    weights_ = (data.d().array() + a).inverse().matrix();
    const Matrix& x = data.x();
    info_ = x.transpose() * weights_.asDiagonal() * x;
    ldlt_.compute(info_);
    const Vector dd = ldlt_.vectorD();
    const double scale = dd.cwiseAbs().maxCoeff();
    if (ldlt_.info() != Eigen::Success || !(dd.minCoeff() > 1e-13 * scale))
      throw RankDeficiencyError("X'V^{-1}X is numerically singular");
    beta_ = ldlt_.solve(x.transpose() * weights_.cwiseProduct(data.y()));
    residual_ = data.y() - x * beta_;
  }

  double a() const noexcept { return a_; }
  const Vector& weights() const noexcept { return weights_; }
  const Matrix& information() const noexcept { return info_; }
  const Vector& beta() const noexcept { return beta_; }
  /// y - X beta-tilde(A).
  const Vector& residual() const noexcept { return residual_; }

  /// x_i'(X'V^{-1}X)^{-1}x_i.
  double info_quad(std::size_t i) const {
    const Vector xi = data_->x_row(i).transpose();
    return xi.dot(ldlt_.solve(xi));
  }

  double log_det_information() const { return ldlt_.vectorD().array().log().sum(); }

  /// y'Py, P = V^{-1} - V^{-1}X(X'V^{-1}X)^{-1}X'V^{-1}.
  double quad_p() const { return residual_.cwiseAbs2().dot(weights_); }

  /// y'P^2y = ||V^{-1}(y - X beta-tilde)||^2.
  double quad_p2() const { return residual_.cwiseProduct(weights_).squaredNorm(); }

  /// tr((X'V^{-1}X)^{-1} X'V^{-2}X).
  double trace_info_inv_xv2x() const {
    const Matrix& x = data_->x();
    const Matrix xv2x = x.transpose() * weights_.cwiseAbs2().asDiagonal() * x;
    return ldlt_.solve(xv2x).trace();
  }

  /// tr(V^{-2}).
  double trace_v_inv2() const { return weights_.squaredNorm(); }

  double fitted(std::size_t i) const { return data_->x_row(i).dot(beta_); }

 private:
  const SmallAreaDataset* data_;
  double a_;
  Vector weights_;
  Matrix info_;
  Eigen::LDLT<Matrix> ldlt_;
  Vector beta_;
  Vector residual_;
};

/// All leverages h_i = x_i'(X'X)^{-1}x_i.
inline Vector leverages(const SmallAreaDataset& data) {
  const Matrix& x = data.x();
  Eigen::LDLT<Matrix> ldlt(x.transpose() * x);
  if (ldlt.info() != Eigen::Success) throw RankDeficiencyError("X'X is singular");
  const Matrix solved = ldlt.solve(x.transpose());  // p x m
  return (x.array() * solved.transpose().array()).rowwise().sum().matrix();
}

inline double leverage(const SmallAreaDataset& data, std::size_t i) {
  if (i >= data.m()) throw Error("leverage: area index out of range");
  return leverages(data)(static_cast<Eigen::Index>(i));
}

/// Existence condition for the area-specific YL estimator: m > (4+p)/(1-h_i).
inline bool yl_condition_holds(std::size_t m, std::size_t p, double h) {
  if (h >= 1.0) return false;
  return static_cast<double>(m) > (4.0 + static_cast<double>(p)) / (1.0 - h);
}

inline bool yl_condition_holds(const SmallAreaDataset& data, std::size_t i) {
  return yl_condition_holds(data.m(), data.p(), leverage(data, i));
}

/// (X'V^{-1}X)^{-1}X'V^{-1}y at V = diag(A + D_i).
inline Vector gls_beta(const SmallAreaDataset& data, double a) {
  return GlsSystem(data, a).beta();
}

/// B_i = D_i/(A + D_i).
inline double shrinkage(double a, double d) { return d / (a + d); }

/// Variance estimator behind a fit. NONE is plain REML.
enum class EstimatorKind { None, Nas, CVariant, Remark1 };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::None: return "reml";
    case EstimatorKind::Nas: return "nas";
    case EstimatorKind::CVariant: return "c_variant";
    case EstimatorKind::Remark1: return "remark1";
  }
  return "?";
}

struct ModelFit {
  double a_hat = 0.0;
  Vector beta_hat;
  EstimatorKind method = EstimatorKind::None;
};

inline ModelFit make_fit(const SmallAreaDataset& data, double a_hat, EstimatorKind method) {
  return ModelFit{a_hat, gls_beta(data, a_hat), method};
}

/// (1 - B_i) y_i + B_i x_i' beta-hat with B_i evaluated at the fit's A.
inline double eblup(const SmallAreaDataset& data, const ModelFit& fit, std::size_t i) {
  if (!(fit.a_hat >= 0.0)) throw DomainError("eblup requires A_hat >= 0");
  const double b = shrinkage(fit.a_hat, data.d(i));
  const double synthetic = data.x_row(i).dot(fit.beta_hat);
  if (b == 1.0) return synthetic;
  return (1.0 - b) * data.y(i) + b * synthetic;
}

}  // namespace fhci

#endif  // FHCI_MODEL_HPP
