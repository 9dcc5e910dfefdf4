#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace fhci;

namespace {
const NominalLevel kLevel = NominalLevel::from_alpha(0.05);
}

TEST(Direct, LengthIsTwoZRootD) {
  for (auto [d, len] : {std::pair{1.0, 3.92}, {20.0, 17.53}, {2.0, 5.54}}) {
    const auto data = test::intercept_dataset({0.5, 1.0, 2.0}, d);
    const auto r = direct_interval(data, 1, kLevel);
    EXPECT_NEAR(r.length(), 2 * kLevel.z * std::sqrt(d), 1e-14);
    EXPECT_NEAR(r.length(), len, 0.005);
    EXPECT_EQ(r.center, 1.0);
  }
}

TEST(Cox, UsesTruncationFloor) {
  const auto data = test::intercept_dataset(std::vector<double>(10, 3.0), 1.0);
  const auto reml = fit_reml(data);
  const auto r = cox_interval(data, reml, 0, kLevel);
  EXPECT_TRUE(r.truncated);
  EXPECT_DOUBLE_EQ(r.a_used, 0.01);
  EXPECT_NEAR(r.s2, 0.01 / 1.01, 1e-15);
}

TEST(Ct, CalibrationCases) {
  const auto data = test::intercept_dataset(std::vector<double>(15, 0.0), 1.0);
  const auto at_d = ct_q_star(mse_components(data, 1.0, 0), kLevel);
  EXPECT_DOUBLE_EQ(at_d.q, kLevel.z);
  EXPECT_FALSE(at_d.fallback);
  const auto c = mse_components(data, 9.0, 0);
  const auto big = ct_q_star(c, kLevel);
  EXPECT_LT(big.q, kLevel.z);
  const double k = c.g3 / c.g1 * (2 - 2 * c.d / c.a);
  EXPECT_NEAR(2 * normal::cdf(big.q) - 1 + big.q * normal::pdf(big.q) * k, 0.95, 1e-12);
  const auto small = ct_q_star(mse_components(data, 0.1, 0), kLevel);
  EXPECT_GT(small.q, kLevel.z);
}

TEST(Nas, BranchConsistency) {
  std::mt19937_64 gen(401);
  for (int rep = 0; rep < 20; ++rep) {
    const auto data = test::random_dataset(gen, 15, 2, 0.2 + 0.3 * rep);
    const auto est = fit_nas(data, kLevel);
    const GlsSystem gls(data, est.a_hat);
    for (std::size_t i = 0; i < data.m(); ++i) {
      const auto r = nas_interval(data, est, gls, i, kLevel);
      const double s2_nas0 = mse_components(gls, data.d(i), i).with_c_star(nas_c_star(kLevel.z));
      ASSERT_TRUE(r.branch.has_value());
      EXPECT_EQ(*r.branch == NasBranch::Nas0, s2_nas0 < data.d(i));
      EXPECT_EQ(r.method, IntervalMethod::Nas);
      if (*r.branch == NasBranch::Nas0) {
        EXPECT_NEAR(r.s2, s2_nas0, 1e-14);
      } else {
        const auto cv = c_variant_interval(data, i, kLevel);
        EXPECT_DOUBLE_EQ(r.center, cv.center);
        EXPECT_DOUBLE_EQ(r.half_width, cv.half_width);
      }
    }
  }
}

TEST(Nas, ShorterThanDirect) {
  std::mt19937_64 gen(409);
  for (int rep = 0; rep < 20; ++rep) {
    const auto data = test::random_dataset(gen, 12 + rep, 2, 0.1 + 0.5 * rep);
    const auto rows = nas_intervals(data, kLevel);
    for (std::size_t i = 0; i < data.m(); ++i)
      EXPECT_LT(rows[i].length(), direct_interval(data, i, kLevel).length());
  }
}

TEST(Intervals, TranslationEquivariant) {
  std::mt19937_64 gen(419);
  const auto data = test::random_dataset(gen, 15, 2, 1.0);
  Vector shift(2);
  shift << -4.0, 2.5;
  const auto moved = data.with_y(data.y() + data.x() * shift);
  const std::vector<std::size_t> areas{0, 7, 14};
  const std::vector<IntervalMethod> methods(std::begin(kAllMethods), std::end(kAllMethods));
  const auto a = build_intervals(data, methods, areas, kLevel, {});
  const auto b = build_intervals(moved, methods, areas, kLevel, {});
  for (std::size_t k = 0; k < methods.size(); ++k) {
    for (std::size_t j = 0; j < areas.size(); ++j) {
      const double delta = data.x_row(areas[j]).dot(shift);
      EXPECT_NEAR(b[k][j].center, a[k][j].center + delta, 1e-8) << method_key(methods[k]);
      EXPECT_NEAR(b[k][j].half_width, a[k][j].half_width, 1e-8) << method_key(methods[k]);
    }
  }
}

TEST(CVariant, BalancedSymmetricUnbalancedNot) {
  std::mt19937_64 gen(421);
  const auto bal = test::random_dataset(gen, 15, 2, 1.0, true);
  const double a0 = fit_c_variant(bal, 0, kLevel).a_hat;
  for (std::size_t i = 1; i < bal.m(); ++i)
    EXPECT_NEAR(fit_c_variant(bal, i, kLevel).a_hat, a0, 1e-9);

  Vector d(15);
  d << 0.2, 0.2, 0.2, 0.4, 0.4, 0.4, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 2, 2, 2;
  const SmallAreaDataset unbal(bal.y(), d, bal.x());
  const double first = fit_c_variant(unbal, 0, kLevel).a_hat;
  const double last = fit_c_variant(unbal, 14, kLevel).a_hat;
  EXPECT_GT(std::abs(first - last), 1e-6);
  EXPECT_NEAR(fit_c_variant(unbal, 1, kLevel).a_hat, first, 1e-9);
}

TEST(Intervals, MethodKeysRoundTrip) {
  for (IntervalMethod m : kAllMethods) EXPECT_EQ(parse_method(method_key(m)), m);
  EXPECT_THROW(parse_method("bogus"), Error);
}

TEST(CoverageExpansion, ReportsBothReadings) {
  const auto data = test::intercept_dataset(std::vector<double>(15, 0.0), 1.0);
  const auto e = coverage_expansion_diagnostic(data, AdjustmentFactor::nas(kLevel.z), 1.0, 0,
                                               nas_c_star(kLevel.z), kLevel);
  EXPECT_NEAR(e.structured_braces, 0.0, 1e-12);
  EXPECT_NEAR(e.predicted_coverage_structured, 0.95, 1e-12);
  EXPECT_GT(e.braces, 0.0);
}
