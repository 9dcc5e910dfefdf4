#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace fhci;

TEST(Mse, BalancedInterceptExample) {
  const auto data = test::intercept_dataset(std::vector<double>(15, 0.0), 1.0);
  const auto c = mse_components(data, 1.0, 0);
  EXPECT_NEAR(c.g1, 0.5, 1e-15);
  EXPECT_NEAR(c.g2, 1.0 / 30.0, 1e-15);
  EXPECT_NEAR(c.g3, 1.0 / 15.0, 1e-15);
  EXPECT_NEAR(c_star_lower_bound(c), -8.0, 1e-12);
  EXPECT_NEAR(uncertainty_measure(c, 2.0), 0.5 + 1.0 / 30 + 2.0 / 15, 1e-15);
  EXPECT_NEAR(uncertainty_measure(c, 0.0), c.blup_mse(), 0.0);
  EXPECT_NEAR(c.traditional(), c.with_c_star(2.0), 0.0);
}

TEST(Mse, Limits) {
  const auto data = test::intercept_dataset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 2.0);
  const auto at0 = mse_components(data, 0.0, 3);
  EXPECT_EQ(at0.g1, 0.0);
  EXPECT_NEAR(at0.g2, 2.0 / 10.0, 1e-15);
  const auto big = mse_components(data, 1e8, 3);
  EXPECT_NEAR(big.g1, 2.0, 1e-7);
  EXPECT_LT(big.g2, 1e-8);
  EXPECT_LT(big.g3, 1e-8);
}

TEST(Mse, AdmissibilityBoundEnforced) {
  const auto data = test::intercept_dataset(std::vector<double>(15, 0.0), 1.0);
  const auto c = mse_components(data, 1.0, 0);
  EXPECT_THROW(uncertainty_measure(c, -8.0), AdmissibilityError);
  EXPECT_THROW(uncertainty_measure(c, -9.0), AdmissibilityError);
  EXPECT_GT(uncertainty_measure(c, -7.9), 0.0);
}

TEST(Mse, BlupMseBelowSamplingVariance) {
  std::mt19937_64 gen(307);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t m = 5 + rep % 30;
    const auto data = test::random_dataset(gen, m, 1 + rep % 3, 1.0);
    const double a = std::exp(8.0 * u(gen) - 4.0);
    const std::size_t i = rep % m;
    const auto c = mse_components(data, a, i);
    EXPECT_LT(c.blup_mse(), data.d(i)) << "rep " << rep;
    EXPECT_GT(c.g1, 0.0);
    EXPECT_GE(c.g2, 0.0);
    EXPECT_GT(c.g3, 0.0);
  }
}

TEST(Mse, NasCStar) {
  EXPECT_NEAR(nas_c_star(1.959963984540054), 0.78964, 1e-5);
}
