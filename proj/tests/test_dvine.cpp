// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "vbda/dvine.hpp"
#include "vbda/margins.hpp"

using namespace vbda;

namespace {

DvineSpec random_spec(int r, int p, Stream& rng, double tau_max = 0.6) {
  DvineSpec s(r, p);
  for (std::size_t b = 0; b < s.size(); ++b) {
    s[b] = MixtureParam{{tau_max * rng.uniform(), rng.uniform()}, {tau_max * rng.uniform(), rng.uniform()},
                        rng.uniform()};
  }
  return s;
}

std::vector<double> random_u(std::size_t n, Stream& rng) {
  std::vector<double> u(n);
  for (auto& x : u) x = rng.uniform();
  return u;
}

}  // namespace

TEST(DvineSpec, BlockCountAndIndexing) {
  for (int r = 1; r <= 4; ++r) {
    for (int p = 1; p <= 3; ++p) {
      DvineSpec s(r, p);
      EXPECT_EQ(s.size(), static_cast<std::size_t>(p * r * r + r * (r - 1) / 2));
      for (std::size_t b = 0; b < s.size(); ++b) {
        const auto k = s.key(b);
        EXPECT_EQ(s.index_of(k.k, k.l2, k.l1), b);
      }
    }
  }
  DvineSpec s(3, 1);
  EXPECT_EQ(s.key(0), (BlockKey{0, 0, 1}));
  EXPECT_EQ(s.key(1), (BlockKey{0, 0, 2}));
  EXPECT_EQ(s.key(2), (BlockKey{0, 1, 2}));
  EXPECT_EQ(s.key(3), (BlockKey{1, 0, 0}));
  EXPECT_THROW(s.index_of(0, 1, 1), InvalidInput);
  EXPECT_THROW(s.index_of(2, 0, 0), InvalidInput);
}

TEST(DvineSpec, JsonRoundTrip) {
  Stream rng(1, StreamTag::kGeneric);
  const auto s = random_spec(2, 2, rng);
  const auto back = DvineSpec::from_json(s.to_json());
  EXPECT_EQ(back.flat(), s.flat());
  EXPECT_EQ(s.to_json()["blocks"][0]["l1"], 2);
}

TEST(ParameterLayout, MaterializeAndInvert) {
  Stream rng(2, StreamTag::kGeneric);
  const auto s = random_spec(2, 1, rng);
  const ParameterLayout layout(s);
  const auto psi = layout.psi_of(s);
  const auto back = layout.materialize(psi).flat();
  const auto orig = s.flat();
  for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(back[i], orig[i], 1e-12);

  std::vector<bool> mask(5, false);
  mask[0] = true;
  const ParameterLayout one(DvineSpec::from_flat(1, 1, std::vector<double>{0.3, 1.0, 0.0, 1.0, 1.0}), mask);
  EXPECT_EQ(one.n_free(), 1u);
  const auto m = one.materialize(std::vector<double>{0.0});
  EXPECT_NEAR(m[0].a.tau, 0.495, 1e-15);
  EXPECT_EQ(m[0].w, 1.0);
  EXPECT_EQ(m[0].a.delta, 1.0);
}

TEST(LogDensity, IndependenceIsZero) {
  Stream rng(3, StreamTag::kGeneric);
  for (int r = 1; r <= 3; ++r) {
    const DvineModel model(DvineSpec(r, 2));
    EXPECT_EQ(model.log_density(random_u(static_cast<std::size_t>(r) * 10, rng)), 0.0);
  }
}

TEST(LogDensity, FirstOrderUsesRawArguments) {
  Stream rng(4, StreamTag::kGeneric);
  DvineSpec s(1, 1);
  s[0] = MixtureParam{{0.6, 0.7}, {0.3, 0.2}, 0.8};
  const DvineModel model(s);
  const std::vector<double> u{0.2, 0.9, 0.4};
  EXPECT_NEAR(model.log_density(u), mix_logpdf(0.2, 0.9, s[0]) + mix_logpdf(0.9, 0.4, s[0]), 1e-13);
}

TEST(LogDensity, LevelsAgreeWithSequentialLattice) {
  Stream rng(41, StreamTag::kGeneric);
  for (int r = 1; r <= 3; ++r) {
    for (int p = 1; p <= 3; ++p) {
      // Strong dependence drives deep h values into the clamp, where both paths lose
      // relative accuracy the same way, hence the looser second tolerance.
      for (const auto& [tau_max, tol] : {std::pair{0.6, 1e-11}, std::pair{0.9, 1e-7}}) {
        auto s = random_spec(r, p, rng, tau_max);
        s[s.size() - 1] = MixtureParam::independence();
        const DvineModel model(s);
        const auto u = random_u(static_cast<std::size_t>(r) * 12, rng);
        DvineLattice lattice(model);
        double seq = 0.0;
        for (double x : u) seq += lattice.push(x);
        EXPECT_NEAR(model.log_density(u), seq, tol * std::max(1.0, std::abs(seq))) << "r=" << r << " p=" << p;
      }
    }
  }
}

TEST(LogDensity, UnivariateAndMultivariatePathsAreBitIdentical) {
  Stream rng(42, StreamTag::kGeneric);
  for (int p = 1; p <= 4; ++p) {
    const DvineModel model(random_spec(1, p, rng, 0.9));
    for (std::size_t T : {2u, 3u, 7u, 50u}) {
      const auto u = random_u(T, rng);
      EXPECT_EQ(model.log_density(u), model.log_density_multivariate(u));
    }
  }
}

TEST(LogDensity, ShortSeriesAndEdges) {
  Stream rng(43, StreamTag::kGeneric);
  EXPECT_EQ(DvineModel(random_spec(1, 2, rng)).log_density(std::vector<double>{0.3}), 0.0);
  const DvineModel model(random_spec(2, 2, rng));
  EXPECT_THROW(model.log_density(std::vector<double>{0.3, 0.4, 0.5}), InvalidInput);
  const std::vector<double> edge{0.0, 1.0, 1.0, 0.0};
  EXPECT_TRUE(std::isfinite(model.log_density(edge)));
}

TEST(LogDensity, SecondOrderMatchesHandRecursion) {
  Stream rng(5, StreamTag::kGeneric);
  const auto s = random_spec(1, 2, rng);
  const DvineModel model(s);
  const auto u = random_u(4, rng);
  const auto& c2 = s[0];
  const auto& c3 = s[1];
  double ref = 0.0;
  for (int t = 1; t < 4; ++t) ref += mix_logpdf(u[t - 1], u[t], c2);
  for (int t = 2; t < 4; ++t) {
    const double back = hfunc(u[t - 2], u[t - 1], c2, Direction::kSecond);  // u_{t-2 | t-1}
    const double fwd = hfunc(u[t - 1], u[t], c2, Direction::kFirst);        // u_{t | t-1}
    ref += mix_logpdf(back, fwd, c3);
  }
  EXPECT_NEAR(model.log_density(u), ref, 1e-12);
}

TEST(LogDensity, MonteCarloNormalization) {
  Stream rng(6, StreamTag::kGeneric);
  const DvineModel model(random_spec(1, 2, rng));
  const std::size_t n = 1000000;
  std::vector<double> vals(n);
  parallel_for(n, [&](std::size_t s) {
    Stream g(6, StreamTag::kOracle, s);
    double u[4];
    for (double& x : u) x = g.uniform();
    vals[s] = std::exp(model.log_density(std::span<const double>(u, 4)));
  });
  double m = 0.0, ss = 0.0;
  for (double v : vals) m += v;
  m /= n;
  for (double v : vals) ss += (v - m) * (v - m);
  const double se = std::sqrt(ss / (n - 1) / n);
  EXPECT_NEAR(m, 1.0, 3.0 * se) << "se=" << se;
}

TEST(LogDensity, IndependenceLagLeavesValueUnchanged) {
  Stream rng(7, StreamTag::kGeneric);
  for (int r = 1; r <= 3; ++r) {
    const auto s = random_spec(r, 1, rng);
    const auto u = random_u(static_cast<std::size_t>(r) * 8, rng);
    EXPECT_EQ(DvineModel(s).log_density(u), DvineModel(s.extended(3)).log_density(u));
  }
}

TEST(LogDensity, BivariateLagZeroBlocks) {
  // r = 2, p = 1, T = 2: four variables (y1_1, y2_1, y1_2, y2_2).
  Stream rng(8, StreamTag::kGeneric);
  const auto s = random_spec(2, 1, rng);
  const DvineModel model(s);
  const auto u = random_u(4, rng);
  const auto& k0 = s.at(0, 0, 1);
  // Tree 1: (0,1) lag 0; (1,2) lag 1 from series 2 to 1; (2,3) lag 0.
  double ref = mix_logpdf(u[0], u[1], k0) + mix_logpdf(u[1], u[2], s.at(1, 1, 0)) + mix_logpdf(u[2], u[3], k0);
  // Tree 2: (0,2 | 1) lag 1 series 1 -> 1; (1,3 | 2) lag 1 series 2 -> 2.
  const double b0 = hfunc(u[0], u[1], k0, Direction::kSecond);
  const double f2 = hfunc(u[1], u[2], s.at(1, 1, 0), Direction::kFirst);
  ref += mix_logpdf(b0, f2, s.at(1, 0, 0));
  const double b1 = hfunc(u[1], u[2], s.at(1, 1, 0), Direction::kSecond);
  const double f3 = hfunc(u[2], u[3], k0, Direction::kFirst);
  ref += mix_logpdf(b1, f3, s.at(1, 1, 1));
  // Tree 3: (0,3 | 1,2) lag 1 series 1 -> 2.
  const double b02 = hfunc(b0, f2, s.at(1, 0, 0), Direction::kSecond);
  const double f13 = hfunc(b1, f3, s.at(1, 1, 1), Direction::kFirst);
  ref += mix_logpdf(b02, f13, s.at(1, 0, 1));
  EXPECT_NEAR(model.log_density(u), ref, 1e-12);
}

TEST(ConditionalCdf, IndependenceIsIdentity) {
  const DvineModel model(DvineSpec(2, 2));
  const std::vector<double> hist{0.1, 0.8, 0.3};
  EXPECT_EQ(conditional_cdf(0.42, hist, model), 0.42);
  EXPECT_EQ(conditional_cdf_inv(0.42, hist, model), 0.42);
}

TEST(ConditionalCdf, FirstOrderIsSingleHFunction) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam{{0.5, 0.6}, {0.2, 0.1}, 0.7};
  const DvineModel model(s);
  const std::vector<double> hist{0.9, 0.25};
  EXPECT_EQ(conditional_cdf(0.6, hist, model), hfunc(0.25, 0.6, s[0], Direction::kFirst));
}

TEST(ConditionalCdf, MatchesIntegratedConditionalDensity) {
  // F(u3 | u1, u2) = int_0^u3 c(u1, u2, s) ds / c(u1, u2), by quadrature of log_density.
  Stream rng(9, StreamTag::kGeneric);
  for (int rep = 0; rep < 5; ++rep) {
    const DvineModel model(random_spec(1, 2, rng));
    const double u1 = 0.1 + 0.8 * rng.uniform(), u2 = 0.1 + 0.8 * rng.uniform();
    const std::vector<double> hist{u1, u2};
    const double c12 = std::exp(model.log_density(hist));
    for (double u3 : {0.2, 0.5, 0.85}) {
      const double num = oracle::integrate_1d(
          [&](double s) {
            const std::vector<double> x{u1, u2, s};
            return std::exp(model.log_density(x));
          },
          400, 0.0, u3);
      EXPECT_NEAR(conditional_cdf(u3, hist, model), num / c12, 2e-3);
    }
  }
}

TEST(ConditionalCdf, InverseRoundTrip) {
  Stream rng(10, StreamTag::kGeneric);
  for (int rep = 0; rep < 30; ++rep) {
    const int r = 1 + rep % 3;
    const DvineModel model(random_spec(r, 1 + rep % 2, rng, 0.9));
    DvineLattice lattice(model);
    for (int i = 0; i < 12 * r; ++i) {
      const double q = rng.uniform();
      const double u = lattice.conditional_cdf_inv(q);
      EXPECT_NEAR(lattice.conditional_cdf(u), q, 1e-8);
      lattice.push(u);
    }
  }
}

TEST(ConditionalCdf, DeepCompositionConverges) {
  Stream rng(11, StreamTag::kGeneric);
  const DvineModel model(random_spec(1, 3, rng, 0.9));
  const auto hist = random_u(6, rng);
  for (double q : {1e-4, 0.5, 1.0 - 1e-4}) {
    const double u = conditional_cdf_inv(q, hist, model);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_NEAR(conditional_cdf(u, hist, model), q, 1e-8);
  }
}

TEST(ConditionalCdf, RosenblattPitsAreUniform) {
  Stream rng(12, StreamTag::kGeneric);
  const DvineModel model(random_spec(2, 2, rng, 0.8));
  const int T = 5;
  const auto draws = model.simulate(T, 1000, 99);
  std::vector<double> pits;
  for (std::size_t s = 0; s < 1000; ++s) {
    DvineLattice lattice(model);
    for (int i = 0; i < 2 * T; ++i) {
      const double u = draws[s * 10 + static_cast<std::size_t>(i)];
      pits.push_back(lattice.conditional_cdf(u));
      lattice.push(u);
    }
  }
  EXPECT_EQ(pits.size(), 10000u);
  EXPECT_GT(oracle::ks_uniform_pvalue(pits), 0.01);
}

TEST(Simulate, IndependenceGivesRawUniforms) {
  const DvineModel model(DvineSpec(2, 1));
  const auto draws = model.simulate(3, 4, 77);
  for (std::size_t s = 0; s < 4; ++s) {
    Stream g(77, StreamTag::kSimulate, s);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(draws[s * 6 + static_cast<std::size_t>(i)], g.uniform());
  }
}

TEST(Simulate, StrongDependenceShowsInRanks) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam::gumbel(0.9);
  const auto draws = DvineModel(s).simulate(2, 100000, 5);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < 100000; ++i) {
    a.push_back(draws[2 * i]);
    b.push_back(draws[2 * i + 1]);
  }
  EXPECT_GT(oracle::rank_correlation(a, b), 0.7);
}

TEST(Simulate, Deterministic) {
  Stream rng(13, StreamTag::kGeneric);
  const DvineModel model(random_spec(2, 2, rng));
  EXPECT_EQ(model.simulate(7, 20, 3), model.simulate(7, 20, 3));
  EXPECT_NE(model.simulate(7, 20, 3), model.simulate(7, 20, 4));
}

TEST(Simulate, QuantizedPathsReproduceTheMargin) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam::gumbel(0.5);
  const OrdinalMargin m({0, 1, 2}, {0.2, 0.5, 0.3});
  const auto draws = DvineModel(s).simulate(50, 400, 8);
  std::vector<std::int64_t> y;
  for (double u : draws) y.push_back(m.quantile(u));
  const auto refit = OrdinalMargin::fit_empirical(y);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(refit.pmf()[k], m.pmf()[k], 0.02);
}

TEST(Oracle, IndependenceIsExactProduct) {
  const DvineModel model(DvineSpec(1, 1));
  const std::vector<double> lo{0.0, 0.4, 0.0}, hi{0.4, 1.0, 0.4};
  const auto e = discrete_loglik_oracle(model, lo, hi, 1000, 1);
  EXPECT_DOUBLE_EQ(e.estimate, 0.4 * 0.6 * 0.4);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(Oracle, SingleTimePointIsPmf) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam::gumbel(0.7);
  const auto e = discrete_loglik_oracle(DvineModel(s), std::vector<double>{0.3}, std::vector<double>{0.75}, 100, 1);
  EXPECT_NEAR(e.estimate, 0.45, 1e-15);
}

TEST(Oracle, StableAcrossSeeds) {
  DvineSpec s(1, 1);
  s[0] = MixtureParam{{0.6, 0.8}, {0.2, 0.5}, 0.7};
  const DvineModel model(s);
  const std::vector<double> lo{0.0, 0.5, 0.5, 0.0, 0.5}, hi{0.5, 1.0, 1.0, 0.5, 1.0};
  const auto a = discrete_loglik_oracle(model, lo, hi, 200000, 1);
  const auto b = discrete_loglik_oracle(model, lo, hi, 200000, 2);
  EXPECT_NEAR(a.estimate, b.estimate, 3.0 * std::hypot(a.std_error, b.std_error));
  EXPECT_GT(a.std_error, 0.0);
}

TEST(Oracle, RejectsLargeInstances) {
  const DvineModel model(DvineSpec(1, 1));
  std::vector<double> lo(13, 0.0), hi(13, 1.0);
  EXPECT_THROW(discrete_loglik_oracle(model, lo, hi, 10, 1), InvalidInput);
}
