#ifndef FHCI_TEST_HELPERS_HPP
#define FHCI_TEST_HELPERS_HPP

#include <random>

#include "fhci/fhci.hpp"

namespace fhci::test {

/// Intercept plus one U(0,1) covariate, variances from `ds`, y drawn from the model.
inline SmallAreaDataset random_dataset(std::mt19937_64& gen, std::size_t m, std::size_t p,
                                       double a, bool balanced = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  Vector d(static_cast<Eigen::Index>(m)), y(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < x.cols(); ++j) x(i, j) = u(gen);
    d(i) = balanced ? 1.0 : 0.2 + 2.0 * u(gen);
    y(i) = x.row(i).sum() + std::sqrt(a) * n(gen) + std::sqrt(d(i)) * n(gen);
  }
  return SmallAreaDataset(std::move(y), std::move(d), std::move(x));
}

inline SmallAreaDataset intercept_dataset(const std::vector<double>& ys, double d) {
  const auto m = static_cast<Eigen::Index>(ys.size());
  Vector y = Eigen::Map<const Vector>(ys.data(), m);
  return SmallAreaDataset(y, Vector::Constant(m, d), Matrix::Ones(m, 1));
}

}  // namespace fhci::test

#endif
