#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace fhci;

namespace {

constexpr double kZ = 1.959963984540054;

// Brute-force maximizer: dense log grid, then golden refinement of the best cell.
double grid_oracle(const SmallAreaDataset& data, const AdjustmentFactor& f, double a_max,
                   int points) {
  const double llo = std::log(a_max * 1e-10), lhi = std::log(a_max);
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) g[k] = std::exp(llo + (lhi - llo) * k / (points - 1));
  int best = 0;
  double bf = -1e300;
  for (int k = 0; k < points; ++k) {
    const double v = adjusted_profile(data, f, g[k]);
    if (v > bf) bf = v, best = k;
  }
  const double lo = g[std::max(best - 1, 0)], hi = g[std::min(best + 1, points - 1)];
  auto obj = [&](double a) { return adjusted_profile(data, f, a); };
  return detail::golden_maximize(obj, lo, hi, 1e-10 * (1 + g[best]), 500).x;
}

}  // namespace

TEST(Existence, Predicates) {
  EXPECT_TRUE(nas_existence_holds(15, 2, kZ));
  EXPECT_FALSE(nas_existence_holds(4, 2, kZ));  // 4 < 2 + 2.42
  EXPECT_TRUE(nas_existence_holds(5, 2, kZ));
  EXPECT_TRUE(c_variant_existence_holds(7, 2));
  EXPECT_FALSE(c_variant_existence_holds(6, 2));
  EXPECT_TRUE(remark1_existence_holds(3, 2));
  EXPECT_FALSE(remark1_existence_holds(2, 2));
}

TEST(BalancedNas, QuadraticExample) {
  // z = 1, m - p = 14, D = 1, y'My = 25:  13 A^2 - 13 A - 1 = 0.
  EXPECT_NEAR(balanced_nas_root(25.0, 15, 1, 1.0, 1.0), (13.0 + std::sqrt(221.0)) / 26.0, 1e-14);
}

TEST(BalancedNas, ClosedFormMatchesOptimizer) {
  std::mt19937_64 gen(211);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = 8 + static_cast<std::size_t>(rep);
    const auto data = test::random_dataset(gen, m, 2, rep % 3 == 0 ? 0.0 : 1.5, true);
    const double closed = balanced_nas_closed_form(data, kZ);
    const auto est = estimate_variance(data, AdjustmentFactor::nas(kZ));
    EXPECT_NEAR(est.a_hat, closed, 1e-8 * std::max(1.0, closed)) << "m=" << m;
    EXPECT_GT(est.a_hat, 0.0);
  }
}

TEST(BalancedNas, MonotoneInResidualSumOfSquares) {
  double prev = 0.0;
  for (double s : {0.0, 0.1, 1.0, 5.0, 13.0, 40.0, 200.0}) {
    const double a = balanced_nas_root(s, 15, 2, 1.0, kZ);
    EXPECT_GT(a, prev);
    prev = a;
  }
}

TEST(BalancedNas, StrictlyPositiveEvenWithPerfectFit) {
  const auto data = test::intercept_dataset(std::vector<double>(10, 3.0), 1.0);
  EXPECT_GT(estimate_variance(data, AdjustmentFactor::nas(kZ)).a_hat, 0.0);
  const auto reml = estimate_variance(data, AdjustmentFactor::none());
  EXPECT_TRUE(reml.truncated);
  EXPECT_DOUBLE_EQ(reml.a_hat, 0.01);
}

TEST(Estimator, AgreesWithDenseGridOracle) {
  std::mt19937_64 gen(223);
  for (std::size_t m : {8u, 15u, 40u}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto data = test::random_dataset(gen, m, 2, 0.3 + rep * 0.4);
      const double a_max = default_a_max(data);
      for (const auto& f : {AdjustmentFactor::nas(kZ), AdjustmentFactor::remark1(),
                            AdjustmentFactor::c_variant(data, rep % m, kZ)}) {
        const auto est = estimate_variance(data, f);
        const double oracle = grid_oracle(data, f, a_max, 20000);
        EXPECT_GE(est.objective_at_opt, adjusted_profile(data, f, oracle) - 1e-9);
        EXPECT_NEAR(est.a_hat, oracle, 1e-5 * (1.0 + oracle))
            << "m=" << m << " kind=" << to_string(f.kind());
      }
    }
  }
}

TEST(Estimator, RemlScoreVanishesAtInteriorOptimum) {
  std::mt19937_64 gen(227);
  for (int rep = 0; rep < 20; ++rep) {
    const auto data = test::random_dataset(gen, 30, 2, 2.0);
    const auto est = estimate_variance(data, AdjustmentFactor::none());
    if (est.truncated) continue;
    EXPECT_NEAR(residual_score(data, est.a_hat), 0.0, 1e-6);
  }
}

TEST(Estimator, ExistenceFlagReported) {
  std::mt19937_64 gen(229);
  const auto data = test::random_dataset(gen, 4, 2, 1.0);
  const auto est = estimate_variance(data, AdjustmentFactor::nas(kZ));
  EXPECT_FALSE(est.existence_condition_met);
}

TEST(Estimator, RejectsBadConfig) {
  std::mt19937_64 gen(233);
  const auto data = test::random_dataset(gen, 10, 2, 1.0);
  SearchConfig cfg;
  cfg.abs_tol = 0.0;
  EXPECT_THROW(estimate_variance(data, AdjustmentFactor::none(), cfg), Error);
}

TEST(MomentDiagnostics, DeterministicAcrossThreadCounts) {
  const auto data = test::intercept_dataset(std::vector<double>(20, 0.0), 1.0);
  const auto a = moment_diagnostics(data, AdjustmentFactor::nas(kZ), 1.0, 200, 9, {}, 1);
  const auto b = moment_diagnostics(data, AdjustmentFactor::nas(kZ), 1.0, 200, 9, {}, 3);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_EQ(a.failures, 0u);
  EXPECT_NEAR(a.predicted_variance, 2.0 * 4.0 / 20.0, 1e-12);
}
