// SPDX-License-Identifier: Apache-2.0
#pragma once

// Posterior summaries built on simulation from fitted D-vines: Spearman
// correlations between Y_{j,s} and Y_{i,s+k}, parameter summaries, predictive
// paths, and the two synthetic data generators.
//
// The bivariate copula C_{j,i,k} is the empirical copula of simulated pairs
// (u_{j,s}, u_{i,s+k}), pooled over s, on pseudo-observations rank / (N + 1).
// Depending on the margins the correlation is
//   discrete/discrete  3 sum_m sum_n g_m g_n (C(b,b) + C(b,a) + C(a,b) + C(a,a)) - 3
//   discrete/cont.     6 sum_m g_m int_0^1 (C(b_m, v) + C(a_m, v)) dv - 3
//   cont./cont.        rank correlation of the pairs.
// The integral in the mixed case is exact for the empirical copula:
// int_0^1 C(x, v) dv = mean of 1{x1 <= x} (1 - x2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <json.hpp>

#include "vbda/common.hpp"
#include "vbda/data.hpp"
#include "vbda/dvine.hpp"
#include "vbda/margins.hpp"
#include "vbda/mcmc.hpp"
#include "vbda/parallel.hpp"
#include "vbda/rng.hpp"
#include "vbda/variational.hpp"

namespace vbda {

using json = nlohmann::json;

inline constexpr std::size_t kSpearmanMaxCells = 10000;

// ---------------------------------------------------------------------------
// Spearman correlations

struct SpearmanEstimate {
  double value = 0.0;
  double std_error = 0.0;  ///< from batch means
};

/// Pseudo-observations rank / (N + 1); ties keep input order.
inline std::vector<double> pseudo_observations(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> out(x.size());
  const double denom = static_cast<double>(x.size()) + 1.0;
  for (std::size_t r = 0; r < idx.size(); ++r) out[idx[r]] = static_cast<double>(r + 1) / denom;
  return out;
}

namespace detail {

/// Index of the first breakpoint >= x; breakpoints end at 1.
inline std::size_t cell_index(const std::vector<double>& cdf, double x) noexcept {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), x);
  return it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
}

inline double spearman_dd(const OrdinalMargin& mj, const OrdinalMargin& mi, std::span<const double> x1,
                          std::span<const double> x2) {
  const std::size_t K1 = mj.size(), K2 = mi.size();
  // cum(m, n) = #{x1 <= G_j(m), x2 <= G_i(n)}, with a zero row and column for the left limits.
  std::vector<double> cum((K1 + 1) * (K2 + 1), 0.0);
  auto at = [&](std::size_t m, std::size_t n) -> double& { return cum[m * (K2 + 1) + n]; };
  for (std::size_t s = 0; s < x1.size(); ++s) at(cell_index(mj.cdf(), x1[s]) + 1, cell_index(mi.cdf(), x2[s]) + 1) += 1.0;
  for (std::size_t m = 1; m <= K1; ++m) {
    for (std::size_t n = 1; n <= K2; ++n) at(m, n) += at(m - 1, n) + at(m, n - 1) - at(m - 1, n - 1);
  }
  const double N = static_cast<double>(x1.size());
  double acc = 0.0;
  for (std::size_t m = 1; m <= K1; ++m) {
    for (std::size_t n = 1; n <= K2; ++n) {
      const double corner = at(m, n) + at(m, n - 1) + at(m - 1, n) + at(m - 1, n - 1);
      acc += mj.pmf()[m - 1] * mi.pmf()[n - 1] * corner;
    }
  }
  return 3.0 * acc / N - 3.0;
}

/// Discrete variable x_disc against continuous x_cont.
inline double spearman_mixed(const OrdinalMargin& md, std::span<const double> x_disc, std::span<const double> x_cont) {
  if (md.size() == 1) return 0.0;
  const std::size_t K = md.size();
  std::vector<double> part(K + 1, 0.0);  // part[m] = sum over x_disc <= G(m) of (1 - x_cont)
  for (std::size_t s = 0; s < x_disc.size(); ++s) part[cell_index(md.cdf(), x_disc[s]) + 1] += 1.0 - x_cont[s];
  for (std::size_t m = 1; m <= K; ++m) part[m] += part[m - 1];
  const double N = static_cast<double>(x_disc.size());
  double acc = 0.0;
  for (std::size_t m = 1; m <= K; ++m) acc += md.pmf()[m - 1] * (part[m] + part[m - 1]);
  return 6.0 * acc / N - 3.0;
}

inline double spearman_cc(std::span<const double> x1, std::span<const double> x2) {
  const double n = static_cast<double>(x1.size());
  double m1 = 0, m2 = 0;
  for (std::size_t s = 0; s < x1.size(); ++s) {
    m1 += x1[s];
    m2 += x2[s];
  }
  m1 /= n;
  m2 /= n;
  double c = 0, v1 = 0, v2 = 0;
  for (std::size_t s = 0; s < x1.size(); ++s) {
    c += (x1[s] - m1) * (x2[s] - m2);
    v1 += (x1[s] - m1) * (x1[s] - m1);
    v2 += (x2[s] - m2) * (x2[s] - m2);
  }
  return c / std::sqrt(v1 * v2);
}

}  // namespace detail

/// Spearman correlation of (Y_j, Y_i) from latent pairs (u_j, u_i) with margins mj, mi.
inline double spearman_from_pairs(const Margin& mj, const Margin& mi, std::span<const double> uj,
                                  std::span<const double> ui) {
  if (uj.size() != ui.size() || uj.size() < 2) throw InvalidInput("spearman: need at least two pairs");
  const auto x1 = pseudo_observations(uj);
  const auto x2 = pseudo_observations(ui);
  const auto* dj = std::get_if<OrdinalMargin>(&mj);
  const auto* di = std::get_if<OrdinalMargin>(&mi);
  if (dj && di) {
    if (dj->size() == 1 || di->size() == 1) return 0.0;
    return detail::spearman_dd(*dj, *di, x1, x2);
  }
  if (dj) return detail::spearman_mixed(*dj, x1, x2);
  if (di) return detail::spearman_mixed(*di, x2, x1);
  return detail::spearman_cc(x1, x2);
}

/// Estimate plus batch-means standard error over `batches` contiguous batches.
inline SpearmanEstimate spearman_with_error(const Margin& mj, const Margin& mi, std::span<const double> uj,
                                            std::span<const double> ui, std::size_t batches = 20) {
  SpearmanEstimate e;
  e.value = spearman_from_pairs(mj, mi, uj, ui);
  const std::size_t n = uj.size();
  if (batches < 2 || n / batches < 2) return e;
  const std::size_t len = n / batches;
  std::vector<double> vals;
  for (std::size_t b = 0; b < batches; ++b) {
    vals.push_back(spearman_from_pairs(mj, mi, uj.subspan(b * len, len), ui.subspan(b * len, len)));
  }
  const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(batches);
  double ss = 0.0;
  for (double v : vals) ss += (v - m) * (v - m);
  // Batch estimates use len pairs; the full estimate has `batches` times as many.
  e.std_error = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return e;
}

/// Latent pairs (u_{j,s}, u_{i,s+k}) pooled over s from paths of `len` time points.
inline void collect_pairs(std::span<const double> paths, int r, int len, int i, int j, int k, std::vector<double>& uj,
                          std::vector<double>& ui) {
  const std::size_t width = static_cast<std::size_t>(r) * static_cast<std::size_t>(len);
  const std::size_t n_paths = paths.size() / width;
  uj.clear();
  ui.clear();
  for (std::size_t p = 0; p < n_paths; ++p) {
    const double* row = paths.data() + p * width;
    for (int s = 0; s + k < len; ++s) {
      uj.push_back(row[static_cast<std::size_t>(s * r + j)]);
      ui.push_back(row[static_cast<std::size_t>((s + k) * r + i)]);
    }
  }
}

struct SpearmanKey {
  int i = 0;  ///< series at the later time (0-based)
  int j = 0;  ///< series at the earlier time (0-based)
  int k = 0;  ///< lag
  bool operator==(const SpearmanKey&) const = default;
};

/// Every (i, j, k) for k = 0..p, skipping i == j at k = 0.
inline std::vector<SpearmanKey> spearman_keys(int r, int p) {
  std::vector<SpearmanKey> keys;
  for (int k = 0; k <= p; ++k) {
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        if (k == 0 && i == j) continue;
        keys.push_back({i, j, k});
      }
    }
  }
  return keys;
}

/// All Spearman correlations of one model from n_sim simulated paths of p + 1 time points.
inline std::vector<SpearmanEstimate> spearman_all(const DvineModel& model, const std::vector<Margin>& margins,
                                                  const std::vector<SpearmanKey>& keys, std::size_t n_sim,
                                                  std::uint64_t seed) {
  if (static_cast<int>(margins.size()) != model.r()) throw InvalidInput("spearman: one margin per series required");
  int len = 1;
  for (const auto& key : keys) len = std::max(len, key.k + 1);
  const auto paths = model.simulate(len, n_sim, seed);
  std::vector<SpearmanEstimate> out;
  std::vector<double> uj, ui;
  for (const auto& key : keys) {
    collect_pairs(paths, model.r(), len, key.i, key.j, key.k, uj, ui);
    out.push_back(spearman_with_error(margins[static_cast<std::size_t>(key.j)], margins[static_cast<std::size_t>(key.i)],
                                      uj, ui));
  }
  return out;
}

struct SpearmanEntry {
  SpearmanKey key;
  double mean = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
  std::vector<double> draws;
};

struct SpearmanReport {
  std::vector<SpearmanEntry> entries;
  std::size_t n_sim = 0;
  std::size_t n_param_draws = 0;
  std::uint64_t seed = 0;
  bool large_support = false;  ///< some pair exceeded kSpearmanMaxCells support cells

  const SpearmanEntry& at(int i, int j, int k) const {
    for (const auto& e : entries) {
      if (e.key == SpearmanKey{i, j, k}) return e;
    }
    throw InvalidInput("no Spearman entry for the requested (i, j, k)");
  }

  /// Long format with 1-based series: i,j,k,mean,q05,q95.
  void write_csv(std::ostream& out) const {
    out << "i,j,k,mean,q05,q95\n";
    char buf[128];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g\n", e.key.i + 1, e.key.j + 1, e.key.k, e.mean, e.q05,
                    e.q95);
      out << buf;
    }
  }

  json to_json() const {
    json rows = json::array();
    for (const auto& e : entries) {
      rows.push_back({{"i", e.key.i + 1}, {"j", e.key.j + 1}, {"k", e.key.k}, {"mean", e.mean}, {"q05", e.q05}, {"q95", e.q95}});
    }
    return json{{"format_version", kFormatVersion},
                {"kind", "vbda-spearman"},
                {"n_sim", n_sim},
                {"n_param_draws", n_param_draws},
                {"seed", seed},
                {"large_support", large_support},
                {"rho", rows}};
  }
};

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile_of(std::vector<double> x, double q) {
  if (x.empty()) throw InvalidInput("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Mean with Neumaier compensation.
inline double compensated_mean(std::span<const double> x) {
  double sum = 0.0, c = 0.0;
  for (double v : x) {
    const double t = sum + v;
    c += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return (sum + c) / static_cast<double>(x.size());
}

/// Posterior Spearman report over a list of psi draws.
inline SpearmanReport spearman_report(const ParameterLayout& layout, const std::vector<Margin>& margins,
                                      const std::vector<std::vector<double>>& psi_draws, std::size_t n_sim,
                                      std::uint64_t seed) {
  if (psi_draws.empty()) throw InvalidInput("spearman: no parameter draws");
  SpearmanReport rep;
  rep.n_sim = n_sim;
  rep.n_param_draws = psi_draws.size();
  rep.seed = seed;
  const auto keys = spearman_keys(layout.r(), layout.p());
  for (const auto& key : keys) {
    const auto* a = std::get_if<OrdinalMargin>(&margins[static_cast<std::size_t>(key.i)]);
    const auto* b = std::get_if<OrdinalMargin>(&margins[static_cast<std::size_t>(key.j)]);
    if (a && b && a->size() * b->size() > kSpearmanMaxCells) rep.large_support = true;
  }
  std::vector<std::vector<double>> vals(keys.size());
  for (std::size_t d = 0; d < psi_draws.size(); ++d) {
    const DvineModel model(layout.materialize(psi_draws[d]));
    const auto est = spearman_all(model, margins, keys, n_sim, splitmix64(seed + d));
    for (std::size_t q = 0; q < keys.size(); ++q) vals[q].push_back(est[q].value);
  }
  for (std::size_t q = 0; q < keys.size(); ++q) {
    rep.entries.push_back({keys[q], compensated_mean(vals[q]), quantile_of(vals[q], 0.05), quantile_of(vals[q], 0.95),
                           std::move(vals[q])});
  }
  return rep;
}

/// count psi draws from q(psi).
inline std::vector<std::vector<double>> psi_draws_vb(const FitResult& fit, std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<double>> out;
  for (const auto& x : sample_theta(fit.lambda.theta, count, seed)) out.emplace_back(x.data(), x.data() + x.size());
  return out;
}

/// count draws spread evenly over the stored chain.
inline std::vector<std::vector<double>> psi_draws_chain(const McmcResult& chain, std::size_t count) {
  if (chain.psi_draws.empty()) throw InvalidInput("chain holds no draws");
  std::vector<std::vector<double>> out;
  const std::size_t n = chain.psi_draws.size();
  count = std::min(count, n);
  for (std::size_t d = 0; d < count; ++d) out.push_back(chain.psi_draws[(d * n) / count]);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter summaries

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double psi_mean = 0.0;
  double psi_sd = 0.0;
};

/// Constrained-space summaries of every free coordinate, with psi-space moments.
inline std::vector<ParameterSummary> posterior_summaries(const ParameterLayout& layout,
                                                         const std::vector<std::vector<double>>& psi_draws) {
  if (psi_draws.empty()) throw InvalidInput("no draws to summarize");
  std::vector<ParameterSummary> out;
  for (std::size_t f = 0; f < layout.n_free(); ++f) {
    std::vector<double> psi, val;
    for (const auto& d : psi_draws) {
      psi.push_back(d[f]);
      val.push_back(from_psi(layout.coordinate(f) % 5, d[f]));
    }
    auto moments = [](const std::vector<double>& x, double& m, double& sd) {
      m = compensated_mean(x);
      double ss = 0.0;
      for (double v : x) ss += (v - m) * (v - m);
      sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    };
    ParameterSummary s;
    s.name = layout.name(f);
    moments(val, s.mean, s.sd);
    moments(psi, s.psi_mean, s.psi_sd);
    s.q05 = quantile_of(val, 0.05);
    s.q50 = quantile_of(val, 0.5);
    s.q95 = quantile_of(val, 0.95);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<ParameterSummary> posterior_summaries(const ParameterLayout& layout, const FitResult& fit,
                                                         std::size_t count = 100000, std::uint64_t seed = 1) {
  return posterior_summaries(layout, psi_draws_vb(fit, count, seed));
}

inline std::vector<ParameterSummary> posterior_summaries(const McmcResult& chain) {
  return posterior_summaries(chain.layout, chain.psi_draws);
}

// ---------------------------------------------------------------------------
// Predictive simulation

struct PredictiveDraws {
  int h = 0;
  int r = 0;
  std::size_t n = 0;
  std::vector<double> values;  ///< index (draw * h + step) * r + series

  double at(std::size_t draw, int step, int series) const {
    return values[(draw * static_cast<std::size_t>(h) + static_cast<std::size_t>(step)) * static_cast<std::size_t>(r) +
                  static_cast<std::size_t>(series)];
  }

  /// Long format: draw,step,series,value with 1-based indices.
  void write_csv(std::ostream& out) const {
    out << "draw,step,series,value\n";
    char buf[96];
    for (std::size_t d = 0; d < n; ++d) {
      for (int s = 0; s < h; ++s) {
        for (int l = 0; l < r; ++l) {
          std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.17g\n", d + 1, s + 1, l + 1, at(d, s, l));
          out << buf;
        }
      }
    }
  }
};

/// Fills the latent cells of the last p time points. Arguments: rng, output PITs
/// of those cells (continuous cells already set).
using AnchorSampler = std::function<void(Stream&, std::span<double>)>;

namespace detail {

inline PredictiveDraws predict_core(const ParameterLayout& layout, const LatentBoxes& boxes,
                                    const std::vector<Margin>& margins, const std::vector<std::vector<double>>& psi,
                                    const AnchorSampler& anchor, int h, std::uint64_t seed) {
  if (h < 1) throw InvalidInput("predict: horizon must be at least 1");
  if (boxes.r != layout.r() || static_cast<int>(margins.size()) != layout.r()) {
    throw InvalidInput("predict: data, margins and model disagree on the number of series");
  }
  const int r = layout.r();
  const int p_hist = std::min(layout.p(), boxes.T);
  PredictiveDraws out{h, r, psi.size(), {}};
  out.values.assign(psi.size() * static_cast<std::size_t>(h) * static_cast<std::size_t>(r), 0.0);
  const std::size_t first = boxes.cells() - static_cast<std::size_t>(p_hist * r);
  parallel_for(psi.size(), [&](std::size_t d) {
    Stream rng(seed, StreamTag::kPredict, d);
    const DvineModel model(layout.materialize(psi[d]));
    std::vector<double> hist(boxes.lower.begin() + static_cast<std::ptrdiff_t>(first), boxes.lower.end());
    anchor(rng, hist);
    DvineLattice lattice(model);
    for (double u : hist) lattice.push(u);
    for (int s = 0; s < h; ++s) {
      for (int l = 0; l < r; ++l) {
        const double u = lattice.conditional_cdf_inv(rng.uniform());
        lattice.push(u);
        const auto& m = margins[static_cast<std::size_t>(l)];
        const double y = std::holds_alternative<OrdinalMargin>(m)
                             ? static_cast<double>(std::get<OrdinalMargin>(m).quantile(u))
                             : std::get<ContinuousMargin>(m).quantile(u);
        out.values[(d * static_cast<std::size_t>(h) + static_cast<std::size_t>(s)) * static_cast<std::size_t>(r) +
                   static_cast<std::size_t>(l)] = y;
      }
    }
  });
  return out;
}

}  // namespace detail

/// Predictive draws from a variational fit. The history latents come from q(u): the
/// whole latent vector is drawn and its last p time points kept.
inline PredictiveDraws predict(const FitResult& fit, const ParameterLayout& layout, const LatentBoxes& boxes,
                               const std::vector<Margin>& margins, int h, std::size_t n_draws, std::uint64_t seed) {
  if (fit.lambda.latent.size() != boxes.n_latent()) throw InvalidInput("predict: fit does not match the data");
  const auto psi = psi_draws_vb(fit, n_draws, splitmix64(seed));
  const int p_hist = std::min(layout.p(), boxes.T);
  const std::size_t first = boxes.cells() - static_cast<std::size_t>(p_hist * layout.r());
  std::vector<double> lo, hi;
  for (std::size_t k = 0; k < boxes.n_latent(); ++k) {
    lo.push_back(boxes.lower[boxes.cell_of[k]]);
    hi.push_back(boxes.upper[boxes.cell_of[k]]);
  }
  const auto& va = fit.lambda.latent;
  const AnchorSampler anchor = [&](Stream& rng, std::span<double> hist) {
    std::vector<double> u(lo.size()), z(lo.size());
    va.sample(lo, hi, rng, u, z);
    for (std::size_t c = first; c < boxes.cells(); ++c) {
      if (boxes.is_latent(c)) hist[c - first] = u[static_cast<std::size_t>(boxes.latent_of[c])];
    }
  };
  return detail::predict_core(layout, boxes, margins, psi, anchor, h, seed);
}

/// Predictive draws from a chain; history latents are uniform on their boxes.
inline PredictiveDraws predict(const McmcResult& chain, const LatentBoxes& boxes, const std::vector<Margin>& margins,
                               int h, std::size_t n_draws, std::uint64_t seed) {
  std::vector<std::vector<double>> psi;
  const std::size_t n = chain.psi_draws.size();
  if (n == 0) throw InvalidInput("chain holds no draws");
  Stream pick(seed, StreamTag::kPredict, 0, 1);
  for (std::size_t d = 0; d < n_draws; ++d) psi.push_back(chain.psi_draws[pick() % n]);
  const int p_hist = std::min(chain.layout.p(), boxes.T);
  const std::size_t first = boxes.cells() - static_cast<std::size_t>(p_hist * chain.layout.r());
  const AnchorSampler anchor = [&](Stream& rng, std::span<double> hist) {
    for (std::size_t c = first; c < boxes.cells(); ++c) {
      if (boxes.is_latent(c)) {
        hist[c - first] = boxes.lower[c] + (boxes.upper[c] - boxes.lower[c]) * rng.uniform();
      }
    }
  };
  return detail::predict_core(chain.layout, boxes, margins, psi, anchor, h, seed);
}

// ---------------------------------------------------------------------------
// Synthetic data

inline constexpr double kAutoLogisticIntercept = -2.197;
inline constexpr double kAutoLogisticSlope = 4.394;

/// Binary series with P(Y_t = 1 | y_{t-1}) = logistic(intercept + slope * y_{t-1}),
/// started from the stationary distribution of the two-state chain.
inline std::vector<double> simulate_autologistic(int T, std::uint64_t seed, double intercept = kAutoLogisticIntercept,
                                                 double slope = kAutoLogisticSlope) {
  if (T < 1) throw InvalidInput("simulate: T must be at least 1");
  const double p01 = logistic(intercept);
  const double p11 = logistic(intercept + slope);
  const double pi1 = p01 / (p01 + 1.0 - p11);
  Stream rng(seed, StreamTag::kDgp);
  std::vector<double> y(static_cast<std::size_t>(T));
  int prev = rng.uniform() < pi1 ? 1 : 0;
  y[0] = prev;
  for (std::size_t t = 1; t < y.size(); ++t) {
    prev = rng.uniform() < (prev ? p11 : p01) ? 1 : 0;
    y[t] = prev;
  }
  return y;
}

/// Smallest k with Poisson(mean) CDF(k) >= u.
inline std::int64_t poisson_quantile(double mean, double u) {
  const boost::math::poisson_distribution<double> dist(mean);
  std::int64_t k = 0;
  double cdf = boost::math::pdf(dist, 0.0);
  while (cdf < u && k < 100000) {
    ++k;
    cdf += boost::math::pdf(dist, static_cast<double>(k));
  }
  return k;
}

/// r Poisson(mean) count series joined by a D-vine: T x r values, row-major.
inline std::vector<double> simulate_dvine_counts(const DvineSpec& spec, int T, double mean, std::uint64_t seed) {
  if (!(mean > 0.0)) throw InvalidInput("Poisson mean must be positive");
  const DvineModel model(spec);
  Stream rng(seed, StreamTag::kDgp);
  const auto u = model.simulate_path(T, rng);
  std::vector<double> y(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) y[i] = static_cast<double>(poisson_quantile(mean, u[i]));
  return y;
}

}  // namespace vbda
