// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "vbda/analysis.hpp"

using namespace vbda;

namespace {

const OrdinalMargin kBinary({0, 1}, {0.5, 0.5});
const OrdinalMargin kThree({0, 1, 2}, {0.2, 0.5, 0.3});
const ContinuousMargin kUniform =
    ContinuousMargin::parametric([](double x) { return x; }, [](double u) { return u; }, "uniform");

DvineModel gumbel_model(double tau, int p = 1) {
  DvineSpec s(1, p);
  s[0] = MixtureParam::gumbel(tau);
  return DvineModel(s);
}

/// Pairs (u_0, u_1) of one lag-1 Gumbel step.
void lag_pairs(const DvineModel& model, std::size_t n, std::uint64_t seed, std::vector<double>& a,
               std::vector<double>& b) {
  collect_pairs(model.simulate(2, n, seed), 1, 2, 0, 0, 1, a, b);
}

/// 12 * mean of centred mid-rank products: the population functional the discrete and
/// mixed formulas estimate, without normalization by the rank variances.
double midrank_statistic(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = oracle::ranks(x);
  const auto ry = oracle::ranks(y);
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) acc += (rx[s] / n - 0.5) * (ry[s] / n - 0.5);
  return 12.0 * acc / n;
}

/// Discrete formula with the comonotone copula min(u, v), by enumeration of all cells.
double comonotone_discrete(const OrdinalMargin& m) {
  double acc = 0.0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    for (std::size_t t = 0; t < m.size(); ++t) {
      const double as = m.left_limit(s), bs = m.cdf()[s], at = m.left_limit(t), bt = m.cdf()[t];
      acc += m.pmf()[s] * m.pmf()[t] *
             (std::min(bs, bt) + std::min(bs, at) + std::min(as, bt) + std::min(as, at));
    }
  }
  return 3.0 * acc - 3.0;
}

FitResult point_mass_fit(std::vector<double> psi, std::size_t n_latent) {
  FitResult f;
  const int n = static_cast<int>(psi.size());
  f.lambda.theta = FactorGaussian(n, 0);
  for (int i = 0; i < n; ++i) f.lambda.theta.mu[i] = psi[static_cast<std::size_t>(i)];
  f.lambda.theta.d.setZero();
  f.lambda.latent = LatentVA(LatentFamily::kVA1, n_latent);
  return f;
}

}  // namespace

TEST(PseudoObservations, Ranks) {
  const std::vector<double> x{0.3, 0.1, 0.9, 0.5};
  EXPECT_EQ(pseudo_observations(x), (std::vector<double>{0.4, 0.2, 0.8, 0.6}));
}

TEST(Spearman, IndependenceIsZeroForEveryMarginType) {
  const DvineModel model(DvineSpec(1, 1));
  std::vector<double> a, b;
  lag_pairs(model, 200000, 1, a, b);
  const std::vector<std::pair<Margin, Margin>> cases{
      {kBinary, kBinary}, {kThree, kBinary}, {kUniform, kUniform}, {kThree, kUniform}, {kUniform, kThree}};
  for (const auto& [mj, mi] : cases) {
    const auto e = spearman_with_error(mj, mi, a, b);
    EXPECT_LT(std::abs(e.value), 3.0 * e.std_error + 1e-12);
    EXPECT_GT(e.std_error, 0.0);
  }
}

TEST(Spearman, ComonotoneBinaryMatchesEnumeration) {
  const auto model = gumbel_model(0.99);
  std::vector<double> a, b;
  lag_pairs(model, 200000, 2, a, b);
  const double ref = comonotone_discrete(kBinary);
  EXPECT_NEAR(ref, 0.75, 1e-15);
  EXPECT_NEAR(spearman_from_pairs(kBinary, kBinary, a, b), ref, 0.01);
  EXPECT_NEAR(spearman_from_pairs(kThree, kThree, a, b), comonotone_discrete(kThree), 0.01);
}

TEST(Spearman, ContemporaneousIsSymmetric) {
  DvineSpec s(2, 1);
  Stream rng(3, StreamTag::kGeneric);
  for (std::size_t b = 0; b < s.size(); ++b) {
    s[b] = MixtureParam{{0.6 * rng.uniform(), rng.uniform()}, {0.6 * rng.uniform(), rng.uniform()}, rng.uniform()};
  }
  const std::vector<Margin> margins{kThree, kBinary};
  const auto keys = std::vector<SpearmanKey>{{1, 0, 0}, {0, 1, 0}};
  const auto est = spearman_all(DvineModel(s), margins, keys, 50000, 4);
  EXPECT_LT(std::abs(est[0].value - est[1].value), 2.0 * est[0].std_error);
}

TEST(Spearman, ContinuousMatchesDirectGumbelPairs) {
  const auto model = gumbel_model(0.5);
  std::vector<double> a, b;
  lag_pairs(model, 1000000, 5, a, b);
  const double est = spearman_from_pairs(kUniform, kUniform, a, b);
  Stream rng(6, StreamTag::kGeneric);
  std::vector<double> x(1000000), y(1000000);
  for (std::size_t s = 0; s < x.size(); ++s) std::tie(x[s], y[s]) = oracle::gumbel_pair(0.5, rng);
  EXPECT_NEAR(est, oracle::rank_correlation(x, y), 0.01);
}

TEST(Spearman, ContinuousInvariantToMonotoneTransforms) {
  const auto model = gumbel_model(0.4);
  std::vector<double> a, b;
  lag_pairs(model, 20000, 7, a, b);
  std::vector<double> ta(a), tb(b);
  for (auto& x : ta) x = std::log(x / (1 - x));
  for (auto& x : tb) x = x * x * x;
  EXPECT_EQ(spearman_from_pairs(kUniform, kUniform, a, b), spearman_from_pairs(kUniform, kUniform, ta, tb));
}

TEST(Spearman, ContinuousAgreesWithGridIntegralOfEmpiricalCopula) {
  const auto model = gumbel_model(0.5);
  std::vector<double> a, b;
  lag_pairs(model, 200000, 8, a, b);
  const auto x = pseudo_observations(a);
  const auto y = pseudo_observations(b);
  const int G = 200;
  std::vector<double> cum(static_cast<std::size_t>((G + 1) * (G + 1)), 0.0);
  for (std::size_t s = 0; s < x.size(); ++s) {
    const int i = std::min(G - 1, static_cast<int>(x[s] * G)) + 1;
    const int j = std::min(G - 1, static_cast<int>(y[s] * G)) + 1;
    cum[static_cast<std::size_t>(i * (G + 1) + j)] += 1.0;
  }
  for (int i = 1; i <= G; ++i) {
    for (int j = 1; j <= G; ++j) {
      cum[static_cast<std::size_t>(i * (G + 1) + j)] += cum[static_cast<std::size_t>((i - 1) * (G + 1) + j)] +
                                                          cum[static_cast<std::size_t>(i * (G + 1) + j - 1)] -
                                                          cum[static_cast<std::size_t>((i - 1) * (G + 1) + j - 1)];
    }
  }
  // Trapezoid rule over the grid nodes of C(i / G, j / G).
  double integral = 0.0;
  for (int i = 0; i <= G; ++i) {
    for (int j = 0; j <= G; ++j) {
      const double w = (i == 0 || i == G ? 0.5 : 1.0) * (j == 0 || j == G ? 0.5 : 1.0);
      integral += w * cum[static_cast<std::size_t>(i * (G + 1) + j)];
    }
  }
  integral /= static_cast<double>(x.size()) * G * G;
  EXPECT_NEAR(spearman_from_pairs(kUniform, kUniform, a, b), 12.0 * integral - 3.0, 0.005);
}

TEST(Spearman, MixedFormula) {
  const DvineModel indep(DvineSpec(1, 1));
  std::vector<double> a, b;
  lag_pairs(indep, 200000, 9, a, b);
  EXPECT_NEAR(spearman_from_pairs(kBinary, kUniform, a, b), 0.0, 0.01);
  const OrdinalMargin one({4}, {1.0});
  EXPECT_EQ(spearman_from_pairs(one, kUniform, a, b), 0.0);
  EXPECT_EQ(spearman_from_pairs(kUniform, one, a, b), 0.0);

  // Near-comonotone: compare with the mid-rank statistic of the observed mixed pairs.
  lag_pairs(gumbel_model(0.99), 1000000, 10, a, b);
  std::vector<double> yd(a.size());
  for (std::size_t s = 0; s < a.size(); ++s) yd[s] = static_cast<double>(kBinary.quantile(a[s]));
  EXPECT_NEAR(spearman_from_pairs(kBinary, kUniform, a, b), midrank_statistic(yd, b), 0.01);
  EXPECT_NEAR(spearman_from_pairs(kBinary, kUniform, a, b), 0.75, 0.01);
}

TEST(Spearman, DiscreteFormulaMatchesMidRankStatistic) {
  std::vector<double> a, b;
  lag_pairs(gumbel_model(0.5), 500000, 11, a, b);
  std::vector<double> ya(a.size()), yb(b.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    ya[s] = static_cast<double>(kThree.quantile(a[s]));
    yb[s] = static_cast<double>(kThree.quantile(b[s]));
  }
  EXPECT_NEAR(spearman_from_pairs(kThree, kThree, a, b), midrank_statistic(ya, yb), 0.005);
}

TEST(Spearman, CoarseningAttenuates) {
  std::vector<double> a, b;
  lag_pairs(gumbel_model(0.6), 200000, 12, a, b);
  const double disc = spearman_from_pairs(kBinary, kBinary, a, b);
  const double cont = spearman_from_pairs(kUniform, kUniform, a, b);
  EXPECT_GT(disc, 0.0);
  EXPECT_LT(std::abs(disc), std::abs(cont));
}

TEST(Spearman, ErrorShrinksWithSampleSize) {
  const auto model = gumbel_model(0.5);
  std::vector<double> a, b;
  lag_pairs(model, 400000, 13, a, b);
  const auto small = spearman_with_error(kThree, kThree, std::span(a).first(200000), std::span(b).first(200000));
  const auto big = spearman_with_error(kThree, kThree, a, b);
  const double ratio = small.std_error / big.std_error;
  EXPECT_GT(ratio, std::sqrt(2.0) / 1.6);
  EXPECT_LT(ratio, std::sqrt(2.0) * 1.6);
}

TEST(Spearman, ValuesStayInUnitInterval) {
  Stream rng(14, StreamTag::kGeneric);
  for (int rep = 0; rep < 10; ++rep) {
    DvineSpec s(1, 2);
    for (std::size_t b = 0; b < s.size(); ++b) {
      s[b] = MixtureParam{{0.95 * rng.uniform(), rng.uniform()}, {0.95 * rng.uniform(), rng.uniform()}, rng.uniform()};
    }
    const std::vector<Margin> margins{kThree};
    for (const auto& e : spearman_all(DvineModel(s), margins, spearman_keys(1, 2), 5000, 15)) {
      EXPECT_GE(e.value, -1.0);
      EXPECT_LE(e.value, 1.0);
    }
  }
}

TEST(SpearmanReport, KeysAndCsvLayout) {
  EXPECT_EQ(spearman_keys(1, 3).size(), 3u);
  EXPECT_EQ(spearman_keys(2, 1).size(), 6u);
  const auto layout = ParameterLayout::all_free(1, 1);
  const std::vector<std::vector<double>> draws(5, layout.psi_of(DvineSpec::from_flat(1, 1, std::vector<double>{0.5, 1, 0.1, 1, 1})));
  const auto rep = spearman_report(layout, {kThree}, draws, 2000, 3);
  ASSERT_EQ(rep.entries.size(), 1u);
  EXPECT_LE(rep.entries[0].q05, rep.entries[0].mean);
  EXPECT_LE(rep.entries[0].mean, rep.entries[0].q95);
  std::ostringstream os;
  rep.write_csv(os);
  EXPECT_EQ(os.str().substr(0, 19), "i,j,k,mean,q05,q95\n");
  EXPECT_EQ(rep.to_json()["rho"][0]["k"], 1);
}

TEST(SpearmanReport, ChainRecoversPositiveSerialDependence) {
  DvineSpec truth(1, 1);
  truth[0] = MixtureParam::gumbel(0.5);
  const auto y = simulate_dvine_counts(truth, 100, 3.0, 21);
  SeriesData data{100, 1, y, {"y"}};
  const auto margins = fit_margins(data, {SeriesKind::kDiscrete});
  const auto boxes = LatentBoxes::build(data, margins);
  McmcConfig cfg;
  cfg.burnin = 2000;
  cfg.iterates = 4000;
  const auto chain = run_sampler(boxes, ParameterLayout::all_free(1, 1), cfg);
  const auto rep = spearman_report(chain.layout, margins, psi_draws_chain(chain, 100), 5000, 22);
  const auto& e = rep.at(0, 0, 1);
  EXPECT_GT(e.mean, 0.0);
  EXPECT_GT(e.q05, 0.0);
}

TEST(PosteriorSummaries, PointMassHasZeroSpread) {
  const auto layout = ParameterLayout::all_free(1, 1);
  const auto fit = point_mass_fit({0.3, -1.0, 2.0, 0.0, 1.5}, 0);
  const auto sums = posterior_summaries(layout, fit, 1000, 4);
  ASSERT_EQ(sums.size(), 5u);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_DOUBLE_EQ(sums[f].mean, from_psi(f, fit.lambda.theta.mu[static_cast<Eigen::Index>(f)]));
    EXPECT_EQ(sums[f].sd, 0.0);
  }
  EXPECT_EQ(sums[0].name, "tau_a_k1_i1_j1");
}

TEST(PosteriorSummaries, QuantilesAreOrdered) {
  const auto layout = ParameterLayout::all_free(1, 1);
  auto fit = point_mass_fit({0.3, -1.0, 2.0, 0.0, 1.5}, 0);
  fit.lambda.theta.d.setConstant(0.5);
  for (const auto& s : posterior_summaries(layout, fit, 20000, 5)) {
    EXPECT_LE(s.q05, s.q50);
    EXPECT_LE(s.q50, s.q95);
    EXPECT_GT(s.sd, 0.0);
    EXPECT_NEAR(s.psi_sd, 0.5, 0.02);
  }
}

TEST(Predict, IndependenceGivesMarginDraws) {
  SeriesData data{6, 1, {0, 1, 2, 1, 1, 2}, {"y"}};
  const std::vector<Margin> margins{kThree};
  const auto boxes = LatentBoxes::build(data, margins);
  const ParameterLayout layout(DvineSpec(1, 2), std::vector<bool>{false, true, false, true, true, false, true, false, true, true});
  const auto fit = point_mass_fit({0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, boxes.n_latent());
  const std::size_t n = 100000;
  const auto pred = predict(fit, layout, boxes, margins, 1, n, 7);
  EXPECT_EQ(pred.values.size(), n);
  std::map<double, double> counts;
  for (double v : pred.values) counts[v] += 1.0;
  double chi = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double e = n * kThree.pmf()[k];
    const double o = counts[static_cast<double>(k)];
    chi += (o - e) * (o - e) / e;
  }
  EXPECT_GT(oracle::chi_square_sf(chi, 2.0), 0.01);
}

TEST(Predict, StrongDependencePersistsTopCategory) {
  SeriesData data{5, 1, {0, 1, 2, 2, 2}, {"y"}};
  const std::vector<Margin> margins{kThree};
  const auto boxes = LatentBoxes::build(data, margins);
  const auto layout = ParameterLayout::all_free(1, 1);
  const auto fit = point_mass_fit(layout.psi_of(DvineSpec::from_flat(1, 1, std::vector<double>{0.95, 1, 0.0, 1, 1})),
                                  boxes.n_latent());
  const auto pred = predict(fit, layout, boxes, margins, 1, 5000, 8);
  std::map<double, int> counts;
  for (double v : pred.values) ++counts[v];
  EXPECT_GT(counts[2.0], counts[1.0]);
  EXPECT_GT(counts[2.0], counts[0.0]);
}

TEST(Predict, ShapeAndDeterminism) {
  SeriesData data{4, 2, {0, 1, 1, 0, 1, 1, 0, 0}, {"a", "b"}};
  const auto margins = fit_margins(data, {SeriesKind::kDiscrete, SeriesKind::kDiscrete});
  const auto boxes = LatentBoxes::build(data, margins);
  const auto layout = ParameterLayout::all_free(2, 1);
  auto fit = point_mass_fit(std::vector<double>(layout.n_free(), 0.0), boxes.n_latent());
  fit.lambda.latent = LatentVA(LatentFamily::kVA3, boxes.n_latent());
  const auto a = predict(fit, layout, boxes, margins, 3, 4, 9);
  const auto b = predict(fit, layout, boxes, margins, 3, 4, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.values.size(), 3u * 2u * 4u);
  std::ostringstream os;
  a.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 25);
  EXPECT_THROW(predict(fit, layout, boxes, margins, 0, 4, 9), InvalidInput);

  McmcConfig cfg;
  cfg.burnin = 20;
  cfg.iterates = 30;
  const auto chain = run_sampler(boxes, layout, cfg);
  const auto c = predict(chain, boxes, margins, 2, 5, 10);
  EXPECT_EQ(c.values.size(), 2u * 2u * 5u);
  EXPECT_EQ(c.values, predict(chain, boxes, margins, 2, 5, 10).values);
}

TEST(Dgp, AutoLogisticTransitions) {
  EXPECT_NEAR(logistic(kAutoLogisticIntercept), 0.100, 5e-4);
  EXPECT_NEAR(logistic(kAutoLogisticIntercept + kAutoLogisticSlope), 0.900, 5e-4);
  const auto y = simulate_autologistic(200000, 3);
  double ones = 0.0, n01 = 0.0, n0 = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    ones += y[t];
    if (t > 0 && y[t - 1] == 0.0) {
      n0 += 1.0;
      n01 += y[t];
    }
  }
  EXPECT_NEAR(ones / y.size(), 0.5, 0.02);
  EXPECT_NEAR(n01 / n0, 0.1, 0.005);
  EXPECT_EQ(simulate_autologistic(50, 4), simulate_autologistic(50, 4));
}

TEST(Dgp, PoissonCountsHaveTheRightMean) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam::gumbel(0.5);
  const auto y = simulate_dvine_counts(s, 20000, 3.0, 5);
  double m = 0.0;
  for (double v : y) m += v;
  EXPECT_NEAR(m / y.size(), 3.0, 0.1);
  EXPECT_EQ(poisson_quantile(3.0, 0.0001), 0);
  EXPECT_EQ(poisson_quantile(3.0, 0.5), 3);
}
