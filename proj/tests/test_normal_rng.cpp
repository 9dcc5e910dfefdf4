#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fhci/normal.hpp"
#include "fhci/rng.hpp"

using namespace fhci;

TEST(Normal, QuantileInvertsCdf) {
  for (double alpha : {0.2, 0.1, 0.05, 0.01, 0.001}) {
    const double z = normal::quantile(1.0 - alpha / 2.0);
    EXPECT_NEAR(normal::cdf(z), 1.0 - alpha / 2.0, 1e-12);
  }
  EXPECT_NEAR(normal::quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal::quantile(0.5), 0.0, 1e-14);
  EXPECT_NEAR(normal::quantile(1e-10), -6.361340902404056, 1e-9);
}

TEST(Normal, TailsAndDensity) {
  EXPECT_NEAR(normal::pdf(0.0), 0.3989422804014327, 1e-15);
  EXPECT_NEAR(normal::upper_tail(1.959963984540054), 0.025, 1e-14);
  EXPECT_NEAR(normal::cdf(-1.0) + normal::cdf(1.0), 1.0, 1e-15);
}

TEST(Philox, KnownAnswer) {
  const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
  const auto ff = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                       {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(ff[0], 0x408f276du);
  EXPECT_EQ(ff[1], 0x41c83b0eu);
  EXPECT_EQ(ff[2], 0xa20bc7c6u);
  EXPECT_EQ(ff[3], 0x6d5451fdu);
}

TEST(RandomStream, ReproducibleAndDistinct) {
  RandomStream a(7, 3, 2), b(7, 3, 2), c(7, 3, 3), d(7, 4, 2);
  for (int k = 0; k < 10; ++k) {
    const double va = a.normal();
    EXPECT_EQ(va, b.normal());
    EXPECT_NE(va, c.normal());
    EXPECT_NE(va, d.normal());
  }
}

TEST(RandomStream, UniformOpenIntervalAndMoments) {
  RandomStream rs(1, 0, 0);
  const int n = 200000;
  double s = 0, s2 = 0, nm = 0, nv = 0;
  for (int k = 0; k < n; ++k) {
    const double u = rs.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.003);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
  for (int k = 0; k < n; ++k) {
    const double z = rs.normal();
    nm += z;
    nv += z * z;
  }
  EXPECT_NEAR(nm / n, 0.0, 0.01);
  EXPECT_NEAR(nv / n, 1.0, 0.015);
}

TEST(Parallel, EveryIndexOnceAndExceptionsPropagate) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(100, 3,
                            [](std::size_t i) {
                              if (i == 57) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
