// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vbda/common.hpp"

namespace vbda {

using json = nlohmann::json;

enum class SeriesKind { kDiscrete, kContinuous };

inline std::string to_string(SeriesKind kind) {
  return kind == SeriesKind::kDiscrete ? "discrete" : "continuous";
}

inline SeriesKind series_kind_from_string(const std::string& s) {
  if (s == "discrete") return SeriesKind::kDiscrete;
  if (s == "continuous") return SeriesKind::kContinuous;
  throw InvalidInput("unknown series type '" + s + "' (expected discrete|continuous)");
}

/// Time-invariant margin of an ordinal series: pmf g and distribution function G over a
/// finite sorted support. A value v maps to the latent box [G(v-), G(v)).
class OrdinalMargin {
 public:
  OrdinalMargin(std::vector<std::int64_t> support, std::vector<double> pmf) : support_(std::move(support)) {
    if (support_.empty()) throw InvalidInput("ordinal margin: empty support");
    if (pmf.size() != support_.size()) throw InvalidInput("ordinal margin: support/pmf size mismatch");
    for (std::size_t k = 1; k < support_.size(); ++k) {
      if (support_[k] <= support_[k - 1]) throw InvalidInput("ordinal margin: support must be strictly increasing");
    }
    double total = 0.0;
    for (double g : pmf) {
      if (!(g > 0.0) || !std::isfinite(g)) throw InvalidInput("ordinal margin: pmf entries must be positive");
      total += g;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("ordinal margin: pmf does not sum to one");
    build_cdf(pmf);
  }

  static OrdinalMargin fit_empirical(std::span<const std::int64_t> y) {
    if (y.empty()) throw InvalidInput("fit_empirical_ordinal: empty series");
    std::map<std::int64_t, std::size_t> counts;
    for (auto v : y) ++counts[v];
    return from_counts(counts, static_cast<double>(y.size()));
  }

  /// Additive (Laplace) smoothing: one pseudo-count per value of a declared full support, so
  /// values absent from the sample keep positive mass.
  static OrdinalMargin fit_smoothed(std::span<const std::int64_t> y, std::span<const std::int64_t> full_support) {
    if (full_support.empty()) throw InvalidInput("fit_smoothed: empty declared support");
    std::map<std::int64_t, std::size_t> counts;
    for (auto v : full_support) counts[v] = 1;
    for (auto v : y) {
      auto it = counts.find(v);
      if (it == counts.end()) throw UnknownCategory("fit_smoothed: value " + std::to_string(v) + " outside declared support");
      ++it->second;
    }
    return from_counts(counts, static_cast<double>(y.size() + counts.size()));
  }

  const std::vector<std::int64_t>& support() const noexcept { return support_; }
  const std::vector<double>& pmf() const noexcept { return pmf_; }
  const std::vector<double>& cdf() const noexcept { return cdf_; }
  std::size_t size() const noexcept { return support_.size(); }

  bool contains(std::int64_t v) const noexcept { return std::binary_search(support_.begin(), support_.end(), v); }

  std::size_t index_of(std::int64_t v) const {
    auto it = std::lower_bound(support_.begin(), support_.end(), v);
    if (it == support_.end() || *it != v) {
      throw UnknownCategory("ordinal value " + std::to_string(v) + " is not in the margin support");
    }
    return static_cast<std::size_t>(it - support_.begin());
  }

  double pmf_at(std::int64_t v) const { return pmf_[index_of(v)]; }

  /// (a, b) = (G(v-), G(v)).
  std::pair<double, double> bounds(std::int64_t v) const {
    const std::size_t k = index_of(v);
    return {left_limit(k), cdf_[k]};
  }

  double left_limit(std::size_t k) const noexcept { return k == 0 ? 0.0 : cdf_[k - 1]; }

  /// Smallest support value with G(v) > u.
  std::int64_t quantile(double u) const noexcept {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return support_.back();
    return support_[static_cast<std::size_t>(it - cdf_.begin())];
  }

  double mean() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k < support_.size(); ++k) m += pmf_[k] * static_cast<double>(support_[k]);
    return m;
  }

  json to_json() const { return json{{"kind", "ordinal"}, {"support", support_}, {"pmf", pmf_}}; }

  static OrdinalMargin from_json(const json& j) {
    return OrdinalMargin(j.at("support").get<std::vector<std::int64_t>>(), j.at("pmf").get<std::vector<double>>());
  }

 private:
  static OrdinalMargin from_counts(const std::map<std::int64_t, std::size_t>& counts, double total) {
    std::vector<std::int64_t> support;
    std::vector<double> pmf;
    for (const auto& [v, c] : counts) {
      support.push_back(v);
      pmf.push_back(static_cast<double>(c) / total);
    }
    double s = 0.0;
    for (double g : pmf) s += g;
    for (double& g : pmf) g /= s;
    return OrdinalMargin(std::move(support), std::move(pmf));
  }

  // Cumulative sums are nudged (by at most a few ulp) until both G(v-) + g(v) == G(v) and
  // G(v) - G(v-) == g(v) hold exactly in floating point.
  void build_cdf(const std::vector<double>& pmf) {
    const std::size_t m = pmf.size();
    cdf_.assign(m, 0.0);
    pmf_.assign(m, 0.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += pmf[k];
    double running = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double a = k == 0 ? 0.0 : cdf_[k - 1];
      running += pmf[k];
      double c = k + 1 == m ? 1.0 : std::min(running / acc, 1.0);
      double g = c - a;
      for (int iter = 0; iter < 16 && !(a + g == c && c - a == g); ++iter) {
        c = a + g;
        g = c - a;
      }
      if (!(a + g == c && c - a == g) || !(g > 0.0)) {
        throw InvalidInput("ordinal margin: could not build a consistent distribution function");
      }
      cdf_[k] = c;
      pmf_[k] = g;
    }
  }

  std::vector<std::int64_t> support_;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

/// Margin of a continuous series. Either an interpolated empirical CDF through
/// (x_(k), k/(T+1)) or a user-supplied parametric CDF/quantile pair.
class ContinuousMargin {
 public:
  using Map = std::function<double(double)>;

  static ContinuousMargin fit_empirical(std::span<const double> x) {
    if (x.empty()) throw InvalidInput("continuous margin: empty series");
    std::vector<double> sorted(x.begin(), x.end());
    for (double v : sorted) {
      if (!std::isfinite(v)) throw InvalidInput("continuous margin: non-finite observation");
    }
    std::sort(sorted.begin(), sorted.end());
    const double denom = static_cast<double>(sorted.size()) + 1.0;
    std::vector<double> xs, ps;
    // Ties share their average plotting position.
    for (std::size_t k = 0; k < sorted.size();) {
      std::size_t e = k;
      while (e + 1 < sorted.size() && sorted[e + 1] == sorted[k]) ++e;
      xs.push_back(sorted[k]);
      ps.push_back((0.5 * static_cast<double>(k + e) + 1.0) / denom);
      k = e + 1;
    }
    return ContinuousMargin(std::move(xs), std::move(ps));
  }

  ContinuousMargin(std::vector<double> xs, std::vector<double> ps) : xs_(std::move(xs)), ps_(std::move(ps)) {
    if (xs_.empty() || xs_.size() != ps_.size()) throw InvalidInput("continuous margin: xs/ps size mismatch");
    for (std::size_t k = 0; k < xs_.size(); ++k) {
      if (!(ps_[k] > 0.0 && ps_[k] < 1.0)) throw InvalidInput("continuous margin: ps must lie in (0,1)");
      if (k > 0 && !(xs_[k] > xs_[k - 1] && ps_[k] > ps_[k - 1])) {
        throw InvalidInput("continuous margin: xs and ps must be strictly increasing");
      }
    }
  }

  static ContinuousMargin parametric(Map cdf, Map quantile, std::string name = "parametric") {
    ContinuousMargin m;
    m.cdf_ = std::move(cdf);
    m.quantile_ = std::move(quantile);
    m.name_ = std::move(name);
    return m;
  }

  bool is_empirical() const noexcept { return !cdf_; }
  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ps() const noexcept { return ps_; }

  double cdf(double x) const {
    if (cdf_) return cdf_(x);
    if (x <= xs_.front()) return ps_.front();
    if (x >= xs_.back()) return ps_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
    const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
    return ps_[k - 1] + t * (ps_[k] - ps_[k - 1]);
  }

  double quantile(double u) const {
    if (quantile_) return quantile_(u);
    if (u <= ps_.front()) return xs_.front();
    if (u >= ps_.back()) return xs_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(ps_.begin(), ps_.end(), u) - ps_.begin());
    const double t = (u - ps_[k - 1]) / (ps_[k] - ps_[k - 1]);
    return xs_[k - 1] + t * (xs_[k] - xs_[k - 1]);
  }

  /// u = G(x), clamped to (kEpsU, 1 - kEpsU).
  double pit(double x) const {
    if (!std::isfinite(x)) throw InvalidInput("continuous_pit: non-finite value");
    return clamp_unit(cdf(x));
  }

  json to_json() const {
    if (!is_empirical()) throw InvalidInput("continuous margin '" + name_ + "' is parametric and cannot be serialized");
    return json{{"kind", "continuous"}, {"xs", xs_}, {"ps", ps_}};
  }

  static ContinuousMargin from_json(const json& j) {
    return ContinuousMargin(j.at("xs").get<std::vector<double>>(), j.at("ps").get<std::vector<double>>());
  }

 private:
  ContinuousMargin() = default;

  std::vector<double> xs_;
  std::vector<double> ps_;
  Map cdf_;
  Map quantile_;
  std::string name_;
};

using Margin = std::variant<OrdinalMargin, ContinuousMargin>;

inline SeriesKind kind_of(const Margin& m) noexcept {
  return std::holds_alternative<OrdinalMargin>(m) ? SeriesKind::kDiscrete : SeriesKind::kContinuous;
}

inline json margin_to_json(const Margin& m) {
  return std::visit([](const auto& x) { return x.to_json(); }, m);
}

inline Margin margin_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ordinal") return OrdinalMargin::from_json(j);
  if (kind == "continuous") return ContinuousMargin::from_json(j);
  throw InvalidInput("unknown margin kind '" + kind + "'");
}

/// Integer view of a discrete series; rejects non-integral values.
inline std::vector<std::int64_t> to_ordinal(std::span<const double> y) {
  std::vector<std::int64_t> out;
  out.reserve(y.size());
  for (double v : y) {
    if (!std::isfinite(v) || v != std::floor(v)) {
      throw InvalidInput("discrete series holds a non-integer value " + std::to_string(v));
    }
    out.push_back(static_cast<std::int64_t>(v));
  }
  return out;
}

}  // namespace vbda
