#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace fhci;

namespace {

// Dense m x m route: beta = (X'V^-1X)^-1 X'V^-1 y with V formed explicitly.
Vector dense_beta(const SmallAreaDataset& data, double a) {
  const Matrix v = (data.d().array() + a).matrix().asDiagonal();
  const Matrix vinv = v.inverse();
  const Matrix& x = data.x();
  return (x.transpose() * vinv * x).partialPivLu().solve(x.transpose() * vinv * data.y());
}

}  // namespace

TEST(Dataset, RejectsNonPositiveVariance) {
  Vector d(3);
  d << 1.0, 0.0, 1.0;
  EXPECT_THROW(SmallAreaDataset(Vector::Ones(3), d, Matrix::Ones(3, 1)), Error);
}

TEST(Dataset, RankDeficiencyNamesColumn) {
  Matrix x(4, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
  try {
    SmallAreaDataset({"a", "b", "c", "d"}, Vector::Ones(4), Vector::Ones(4), x,
                     {"const", "size", "size2"});
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    const std::string what = e.what();
    EXPECT_TRUE(what.find("size") != std::string::npos) << what;
  }
}

TEST(Leverage, SumsToP) {
  std::mt19937_64 gen(11);
  for (std::size_t p : {1u, 2u, 3u}) {
    const auto data = test::random_dataset(gen, 20, p, 1.0);
    EXPECT_NEAR(leverages(data).sum(), static_cast<double>(p), 1e-12);
  }
}

TEST(Leverage, InterceptOnly) {
  const auto data = test::intercept_dataset(std::vector<double>(15, 0.0), 1.0);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(leverage(data, i), 1.0 / 15.0, 1e-14);
}

TEST(Leverage, YlCondition) {
  EXPECT_TRUE(yl_condition_holds(15, 2, 0.23));
  EXPECT_FALSE(yl_condition_holds(15, 2, 0.64));
  EXPECT_FALSE(yl_condition_holds(15, 2, 1.0));
}

TEST(Gls, BalancedInterceptIsMean) {
  const auto data = test::intercept_dataset({1.0, 2.0, 4.0, 9.0}, 0.7);
  for (double a : {0.0, 0.3, 5.0}) EXPECT_NEAR(gls_beta(data, a)(0), 4.0, 1e-14);
}

TEST(Gls, LargeVarianceApproachesOls) {
  std::mt19937_64 gen(5);
  const auto data = test::random_dataset(gen, 12, 2, 1.0);
  const Vector ols = data.x().colPivHouseholderQr().solve(data.y());
  EXPECT_LT((gls_beta(data, 1e12) - ols).norm(), 1e-8);
}

TEST(Gls, MatchesDenseOracle) {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 20; ++rep) {
    const auto data = test::random_dataset(gen, 10 + rep, 3, 0.5);
    for (double a : {0.0, 0.1, 1.0, 10.0}) {
      const GlsSystem gls(data, a);
      EXPECT_LT((gls.beta() - dense_beta(data, a)).norm(), 1e-10);
      const Matrix info = data.x().transpose() *
                          (data.d().array() + a).inverse().matrix().asDiagonal() * data.x();
      const Vector xi = data.x_row(3).transpose();
      EXPECT_NEAR(gls.info_quad(3), xi.dot(info.inverse() * xi), 1e-10);
    }
  }
}

TEST(Eblup, ShrinkageExamples) {
  const auto data = test::intercept_dataset({0.0, 2.0}, 1.0);  // x'beta = 1
  const ModelFit fit = make_fit(data, 1.0, EstimatorKind::None);
  EXPECT_NEAR(eblup(data, fit, 1), 1.5, 1e-14);  // B = 0.5
  const ModelFit zero = make_fit(data, 0.0, EstimatorKind::None);
  EXPECT_DOUBLE_EQ(eblup(data, zero, 1), 1.0);
  EXPECT_NEAR(shrinkage(0.0, 2.0), 1.0, 0.0);
  EXPECT_NEAR(shrinkage(3.0, 1.0), 0.25, 1e-15);
}

TEST(Eblup, LiesBetweenDirectAndSynthetic) {
  std::mt19937_64 gen(23);
  const auto data = test::random_dataset(gen, 15, 2, 1.0);
  const ModelFit fit = make_fit(data, 0.8, EstimatorKind::None);
  for (std::size_t i = 0; i < data.m(); ++i) {
    const double synth = data.x_row(i).dot(fit.beta_hat);
    const double e = eblup(data, fit, i);
    EXPECT_LE(e, std::max(synth, data.y(i)) + 1e-12);
    EXPECT_GE(e, std::min(synth, data.y(i)) - 1e-12);
  }
}

TEST(Eblup, ReorderingAreasPermutesResults) {
  std::mt19937_64 gen(29);
  const auto data = test::random_dataset(gen, 9, 2, 1.0);
  std::vector<Eigen::Index> perm{4, 2, 8, 0, 1, 7, 3, 6, 5};
  Vector y(9), d(9);
  Matrix x(9, 2);
  for (Eigen::Index k = 0; k < 9; ++k) {
    y(k) = data.y()(perm[k]);
    d(k) = data.d()(perm[k]);
    x.row(k) = data.x().row(perm[k]);
  }
  const SmallAreaDataset shuffled(y, d, x);
  const ModelFit f1 = make_fit(data, 0.6, EstimatorKind::None);
  const ModelFit f2 = make_fit(shuffled, 0.6, EstimatorKind::None);
  for (std::size_t k = 0; k < 9; ++k)
    EXPECT_NEAR(eblup(shuffled, f2, k), eblup(data, f1, static_cast<std::size_t>(perm[k])), 1e-12);
}
