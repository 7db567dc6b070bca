// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vbda/margins.hpp"
#include "vbda/rng.hpp"

using namespace vbda;

TEST(OrdinalMargin, EmpiricalCounts) {
  const std::vector<std::int64_t> y{0, 0, 1};
  const auto m = OrdinalMargin::fit_empirical(y);
  ASSERT_EQ(m.support(), (std::vector<std::int64_t>{0, 1}));
  EXPECT_NEAR(m.pmf()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.pmf()[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.cdf()[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.cdf()[1], 1.0);
}

TEST(OrdinalMargin, Degenerate) {
  const std::vector<std::int64_t> y{5, 5, 5};
  const auto m = OrdinalMargin::fit_empirical(y);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.pmf()[0], 1.0);
  EXPECT_EQ(m.cdf()[0], 1.0);
}

TEST(OrdinalMargin, EmptySeriesRejected) {
  EXPECT_THROW(OrdinalMargin::fit_empirical(std::vector<std::int64_t>{}), InvalidInput);
}

TEST(OrdinalMargin, Bounds) {
  const auto m = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{0, 0, 1});
  auto [a0, b0] = m.bounds(0);
  EXPECT_EQ(a0, 0.0);
  EXPECT_NEAR(b0, 2.0 / 3.0, 1e-15);
  auto [a1, b1] = m.bounds(1);
  EXPECT_NEAR(a1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(b1, 1.0);
  const auto m2 = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{0, 1, 2, 2});
  auto [a2, b2] = m2.bounds(2);
  EXPECT_EQ(a2, 0.5);
  EXPECT_EQ(b2, 1.0);
  EXPECT_THROW(m.bounds(7), UnknownCategory);
}

TEST(OrdinalMargin, Quantile) {
  const auto m = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{0, 0, 1});
  EXPECT_EQ(m.quantile(0.5), 0);
  EXPECT_EQ(m.quantile(0.9), 1);
  EXPECT_EQ(m.quantile(0.0), 0);
}

TEST(OrdinalMargin, ExactBoxArithmeticOnManySupports) {
  Stream rng(42, StreamTag::kGeneric);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::int64_t> y;
    const int T = 3 + static_cast<int>(rng() % 200);
    const int width = 1 + static_cast<int>(rng() % 12);
    for (int t = 0; t < T; ++t) y.push_back(static_cast<std::int64_t>(rng() % static_cast<unsigned>(width)) - 3);
    const auto m = OrdinalMargin::fit_empirical(y);
    double total = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const auto [a, b] = m.bounds(m.support()[k]);
      EXPECT_EQ(a + m.pmf()[k], m.cdf()[k]);
      EXPECT_EQ(b - a, m.pmf()[k]);
      EXPECT_LT(a, b);
      if (k > 0) {
        EXPECT_LT(m.cdf()[k - 1], m.cdf()[k]);
      }
      total += b - a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(m.cdf().back(), 1.0);
  }
}

TEST(OrdinalMargin, QuantileRoundTripOnDenseGrid) {
  const auto m = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{0, 1, 1, 2, 4, 4, 4, 9});
  for (std::int64_t v : m.support()) {
    const auto [a, b] = m.bounds(v);
    for (int s = 0; s < 1000; ++s) {
      const double u = a + (b - a) * s / 1000.0;
      ASSERT_EQ(m.quantile(u), v) << "u=" << u;
    }
  }
}

TEST(OrdinalMargin, SmoothedSupportKeepsUnseenValues) {
  const std::vector<std::int64_t> y{0, 0, 2};
  const std::vector<std::int64_t> full{0, 1, 2, 3};
  const auto m = OrdinalMargin::fit_smoothed(y, full);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_NEAR(m.pmf_at(0), 3.0 / 7.0, 1e-15);
  EXPECT_NEAR(m.pmf_at(1), 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(m.pmf_at(3), 1.0 / 7.0, 1e-15);
  EXPECT_THROW(OrdinalMargin::fit_smoothed(std::vector<std::int64_t>{5}, full), UnknownCategory);
}

TEST(OrdinalMargin, JsonRoundTrip) {
  const auto m = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{3, 1, 1, 2});
  const auto back = OrdinalMargin::from_json(m.to_json());
  EXPECT_EQ(back.support(), m.support());
  EXPECT_EQ(back.cdf(), m.cdf());
  EXPECT_EQ(back.pmf(), m.pmf());
}

TEST(OrdinalMargin, RejectsInvalidPmf) {
  EXPECT_THROW(OrdinalMargin({0, 1}, {0.5, 0.6}), InvalidInput);
  EXPECT_THROW(OrdinalMargin({0, 1}, {1.0, 0.0}), InvalidInput);
  EXPECT_THROW(OrdinalMargin({1, 0}, {0.5, 0.5}), InvalidInput);
}

TEST(ContinuousMargin, InterpolatedEcdfMidpoint) {
  const auto m = ContinuousMargin::fit_empirical(std::vector<double>{1.0, 2.0, 3.0});
  // Plotting positions k/(T+1): 0.25, 0.5, 0.75 with linear interpolation between them.
  EXPECT_DOUBLE_EQ(m.pit(2.0), 0.5);
  EXPECT_DOUBLE_EQ(m.pit(1.5), 0.375);
  EXPECT_DOUBLE_EQ(m.pit(1.0), 0.25);
  EXPECT_DOUBLE_EQ(m.pit(-10.0), 0.25);
}

TEST(ContinuousMargin, QuantileInvertsCdfAtSamplePoints) {
  const std::vector<double> x{0.3, -1.2, 5.5, 2.0, 2.0, 7.25};
  const auto m = ContinuousMargin::fit_empirical(x);
  for (double v : x) EXPECT_NEAR(m.quantile(m.cdf(v)), v, 1e-8);
}

TEST(ContinuousMargin, ParametricRoundTripAndClamp) {
  const auto m = ContinuousMargin::parametric([](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                                              [](double u) { return std::log(u / (1.0 - u)); }, "logistic");
  for (double x : {-5.0, -0.3, 0.0, 1.7, 12.0}) EXPECT_NEAR(m.quantile(m.pit(x)), x, 1e-8);
  EXPECT_EQ(m.pit(-60.0), kEpsU);
  EXPECT_EQ(m.pit(60.0), 1.0 - kEpsU);
  EXPECT_THROW(m.pit(std::nan("")), InvalidInput);
  EXPECT_THROW(m.to_json(), InvalidInput);
}

TEST(ContinuousMargin, JsonRoundTrip) {
  const auto m = ContinuousMargin::fit_empirical(std::vector<double>{4.0, 1.0, 2.5});
  const auto back = ContinuousMargin::from_json(m.to_json());
  EXPECT_EQ(back.xs(), m.xs());
  EXPECT_EQ(back.ps(), m.ps());
}

TEST(Margin, VariantSerialization) {
  Margin a = OrdinalMargin::fit_empirical(std::vector<std::int64_t>{0, 1});
  Margin b = ContinuousMargin::fit_empirical(std::vector<double>{0.0, 1.0});
  EXPECT_EQ(kind_of(margin_from_json(margin_to_json(a))), SeriesKind::kDiscrete);
  EXPECT_EQ(kind_of(margin_from_json(margin_to_json(b))), SeriesKind::kContinuous);
  EXPECT_THROW(margin_from_json(json{{"kind", "poisson"}}), InvalidInput);
  EXPECT_THROW(to_ordinal(std::vector<double>{1.0, 1.5}), InvalidInput);
}
