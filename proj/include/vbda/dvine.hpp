// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stationary Markov-p D-vine over the flattened index i = l1 + r * t (series within
// time, 0-based). The pair (j, i) with gap g = i - j couples series l2 = j mod r at
// time t - k with series l1 at time t; it uses block theta^(k)_{l2,l1} when k <= p
// and the independence copula otherwise. Only gaps up to r * (p + 1) - 1 can be
// dependent, so the recursion keeps that many levels of conditional values.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbda/common.hpp"
#include "vbda/paircopula.hpp"
#include "vbda/parallel.hpp"
#include "vbda/rng.hpp"

namespace vbda {

using json = nlohmann::json;

struct BlockKey {
  int k = 0;   ///< lag between the two series' time points
  int l2 = 0;  ///< series of the earlier variable (0-based)
  int l1 = 0;  ///< series of the later variable (0-based)

  friend bool operator==(const BlockKey&, const BlockKey&) = default;
};

/// Grid of pair-copula parameters. Block order: lag 0 pairs (l2 < l1, l2 outer), then
/// for each lag k = 1..p all r * r pairs with l2 outer and l1 inner.
class DvineSpec {
 public:
  DvineSpec(int r, int p) : r_(r), p_(p) {
    if (r < 1) throw InvalidInput("D-vine needs at least one series");
    if (p < 1) throw InvalidInput("D-vine Markov order must be at least 1");
    blocks_.assign(count(r, p), MixtureParam::independence());
  }

  static std::size_t count(int r, int p) noexcept {
    const auto rr = static_cast<std::size_t>(r);
    return static_cast<std::size_t>(p) * rr * rr + rr * (rr - 1) / 2;
  }

  int r() const noexcept { return r_; }
  int p() const noexcept { return p_; }
  std::size_t size() const noexcept { return blocks_.size(); }

  std::size_t index_of(int k, int l2, int l1) const {
    if (k < 0 || k > p_ || l1 < 0 || l2 < 0 || l1 >= r_ || l2 >= r_ || (k == 0 && l2 >= l1)) {
      throw InvalidInput("no pair-copula block (k=" + std::to_string(k) + ", l2=" + std::to_string(l2) +
                         ", l1=" + std::to_string(l1) + ")");
    }
    if (k == 0) {
      // Pairs (l2', l1') with l2' < l2 come first.
      const int before = l2 * (r_ - 1) - l2 * (l2 - 1) / 2;
      return static_cast<std::size_t>(before + (l1 - l2 - 1));
    }
    const std::size_t base = static_cast<std::size_t>(r_) * static_cast<std::size_t>(r_ - 1) / 2;
    return base + static_cast<std::size_t>((k - 1) * r_ * r_ + l2 * r_ + l1);
  }

  BlockKey key(std::size_t idx) const {
    const std::size_t base = static_cast<std::size_t>(r_) * static_cast<std::size_t>(r_ - 1) / 2;
    if (idx < base) {
      std::size_t n = idx;
      for (int l2 = 0; l2 < r_; ++l2) {
        const auto row = static_cast<std::size_t>(r_ - 1 - l2);
        if (n < row) return {0, l2, l2 + 1 + static_cast<int>(n)};
        n -= row;
      }
    }
    if (idx >= blocks_.size()) throw InvalidInput("pair-copula index out of range");
    const auto rest = static_cast<int>(idx - base);
    return {1 + rest / (r_ * r_), (rest % (r_ * r_)) / r_, rest % r_};
  }

  MixtureParam& operator[](std::size_t idx) { return blocks_.at(idx); }
  const MixtureParam& operator[](std::size_t idx) const { return blocks_.at(idx); }
  MixtureParam& at(int k, int l2, int l1) { return blocks_[index_of(k, l2, l1)]; }
  const MixtureParam& at(int k, int l2, int l1) const { return blocks_[index_of(k, l2, l1)]; }

  void validate() const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      try {
        blocks_[b].validate();
      } catch (const InvalidParameter& e) {
        const auto k = key(b);
        throw InvalidParameter("block (k=" + std::to_string(k.k) + ", l2=" + std::to_string(k.l2 + 1) +
                               ", l1=" + std::to_string(k.l1 + 1) + "): " + e.what());
      }
    }
  }

  /// Constrained parameters, five per block in block order.
  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(5 * blocks_.size());
    for (const auto& b : blocks_) {
      const auto a = b.to_array();
      out.insert(out.end(), a.begin(), a.end());
    }
    return out;
  }

  static DvineSpec from_flat(int r, int p, std::span<const double> x) {
    DvineSpec s(r, p);
    if (x.size() != 5 * s.size()) throw InvalidInput("flat parameter vector has the wrong length");
    for (std::size_t b = 0; b < s.size(); ++b) s.blocks_[b] = MixtureParam::from_array(x.subspan(5 * b).first<5>());
    return s;
  }

  /// Same blocks with Markov order raised to p_new; new lags are independence copulas.
  DvineSpec extended(int p_new) const {
    if (p_new < p_) throw InvalidInput("extended(): order can only grow");
    DvineSpec out(r_, p_new);
    for (std::size_t b = 0; b < size(); ++b) {
      const auto k = key(b);
      out.at(k.k, k.l2, k.l1) = blocks_[b];
    }
    return out;
  }

  /// {r, p, blocks: [{k, l1, l2, params}]} with 1-based series indices.
  json to_json() const {
    json blocks = json::array();
    for (std::size_t b = 0; b < size(); ++b) {
      const auto k = key(b);
      blocks.push_back({{"k", k.k}, {"l1", k.l1 + 1}, {"l2", k.l2 + 1}, {"params", blocks_[b].to_array()}});
    }
    return json{{"r", r_}, {"p", p_}, {"blocks", blocks}};
  }

  static DvineSpec from_json(const json& j) {
    DvineSpec s(j.at("r").get<int>(), j.at("p").get<int>());
    std::vector<bool> seen(s.size(), false);
    for (const auto& b : j.at("blocks")) {
      const auto idx = s.index_of(b.at("k").get<int>(), b.at("l2").get<int>() - 1, b.at("l1").get<int>() - 1);
      const auto a = b.at("params").get<std::vector<double>>();
      if (a.size() != 5) throw InvalidInput("pair-copula params must have 5 entries");
      s.blocks_[idx] = MixtureParam::from_array(std::span<const double, 5>(a.data(), 5));
      seen[idx] = true;
    }
    for (bool x : seen) {
      if (!x) throw InvalidInput("D-vine JSON is missing pair-copula blocks");
    }
    s.validate();
    return s;
  }

 private:
  int r_;
  int p_;
  std::vector<MixtureParam> blocks_;
};

/// Maps the free unconstrained coordinates of a model onto a full DvineSpec. Fixed
/// coordinates keep the constrained value they have in the template.
class ParameterLayout {
 public:
  explicit ParameterLayout(DvineSpec base) : ParameterLayout(base, std::vector<bool>(5 * base.size(), true)) {}

  ParameterLayout(DvineSpec base, std::vector<bool> free_mask) : base_(std::move(base)), free_(std::move(free_mask)) {
    if (free_.size() != 5 * base_.size()) throw InvalidInput("free mask must have 5 entries per pair-copula");
    base_.validate();
    for (std::size_t c = 0; c < free_.size(); ++c) {
      if (free_[c]) free_index_.push_back(c);
    }
    if (free_index_.empty()) throw InvalidInput("model has no free parameters");
  }

  static ParameterLayout all_free(int r, int p) { return ParameterLayout(DvineSpec(r, p)); }

  const DvineSpec& base() const noexcept { return base_; }
  int r() const noexcept { return base_.r(); }
  int p() const noexcept { return base_.p(); }
  std::size_t n_free() const noexcept { return free_index_.size(); }
  const std::vector<bool>& free_mask() const noexcept { return free_; }

  /// Flat coordinate (5 * block + component) of free parameter f.
  std::size_t coordinate(std::size_t f) const { return free_index_.at(f); }

  DvineSpec materialize(std::span<const double> psi) const {
    if (psi.size() != n_free()) throw InvalidInput("psi vector has the wrong length");
    auto x = base_.flat();
    for (std::size_t f = 0; f < psi.size(); ++f) {
      const std::size_t c = free_index_[f];
      x[c] = from_psi(c % 5, psi[f]);
    }
    return DvineSpec::from_flat(base_.r(), base_.p(), x);
  }

  std::vector<double> psi_of(const DvineSpec& spec) const {
    const auto x = spec.flat();
    if (x.size() != free_.size()) throw InvalidInput("spec does not match the layout");
    std::vector<double> psi(n_free());
    for (std::size_t f = 0; f < psi.size(); ++f) psi[f] = to_psi(free_index_[f] % 5, x[free_index_[f]]);
    return psi;
  }

  /// Column name of free parameter f, e.g. "tau_a_k1_i1_j1" for lag 1 from series j to i.
  std::string name(std::size_t f) const {
    static constexpr const char* kComponents[5] = {"tau_a", "delta_a", "tau_b", "delta_b", "w"};
    const std::size_t c = coordinate(f);
    const auto key = base_.key(c / 5);
    return std::string(kComponents[c % 5]) + "_k" + std::to_string(key.k) + "_i" + std::to_string(key.l1 + 1) + "_j" +
           std::to_string(key.l2 + 1);
  }

  /// Constrained value of every flat coordinate given the free psi vector.
  std::vector<double> constrained(std::span<const double> psi) const { return materialize(psi).flat(); }

  json to_json() const {
    std::vector<int> mask(free_.begin(), free_.end());
    return json{{"template", base_.to_json()}, {"free", mask}};
  }

  static ParameterLayout from_json(const json& j) {
    auto mask = j.at("free").get<std::vector<int>>();
    return ParameterLayout(DvineSpec::from_json(j.at("template")), std::vector<bool>(mask.begin(), mask.end()));
  }

 private:
  DvineSpec base_;
  std::vector<bool> free_;
  std::vector<std::size_t> free_index_;
};

/// Immutable evaluator for one DvineSpec: pair-copula kernels plus the gap -> block table.
class DvineModel {
 public:
  explicit DvineModel(DvineSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const int r = spec_.r();
    depth_ = r * (spec_.p() + 1) - 1;
    kernels_.reserve(spec_.size());
    for (std::size_t b = 0; b < spec_.size(); ++b) kernels_.emplace_back(spec_[b]);
    table_.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(depth_ + 1), -1);
    for (int l1 = 0; l1 < r; ++l1) {
      for (int g = 1; g <= depth_; ++g) {
        const int k = (g - l1 + r - 1) / r;  // ceil((g - l1) / r) for g > l1; zero otherwise
        const int l2 = ((l1 - g) % r + r) % r;
        if (k > spec_.p()) continue;
        if (k == 0 && l2 >= l1) continue;
        const auto b = spec_.index_of(k, l2, l1);
        if (!kernels_[b].independent()) table_[slot(l1, g)] = static_cast<int>(b);
      }
    }
  }

  const DvineSpec& spec() const noexcept { return spec_; }
  int r() const noexcept { return spec_.r(); }
  int p() const noexcept { return spec_.p(); }
  /// Largest gap between dependent variables.
  int depth() const noexcept { return depth_; }

  /// Kernel for the pair at gap g ending in series l1, or nullptr for independence.
  const MixtureKernel* pair(int l1, int g) const noexcept {
    const int b = table_[slot(l1, g)];
    return b < 0 ? nullptr : &kernels_[static_cast<std::size_t>(b)];
  }

  /// Log copula density of a full flattened PIT vector (length r * T), evaluated one
  /// vine level at a time over arrays. r = 1 takes a contiguous univariate path.
  double log_density(std::span<const double> u) const;

  /// The general path, which gathers the pairs of each level by series. For r = 1 it
  /// agrees with log_density bit for bit.
  double log_density_multivariate(std::span<const double> u) const;

  /// One path of T time points (r * T PITs), generated by sequential inversion.
  std::vector<double> simulate_path(int T, Stream& rng) const;

  /// n_paths x (r * T) draws, row-major; path s uses its own stream.
  std::vector<double> simulate(int T, std::size_t n_paths, std::uint64_t seed) const {
    if (T < 1) throw InvalidInput("simulate: T must be at least 1");
    const std::size_t width = static_cast<std::size_t>(r()) * static_cast<std::size_t>(T);
    std::vector<double> out(n_paths * width);
    parallel_for(n_paths, [&](std::size_t s) {
      Stream rng(seed, StreamTag::kSimulate, s);
      const auto path = simulate_path(T, rng);
      std::copy(path.begin(), path.end(), out.begin() + static_cast<std::ptrdiff_t>(s * width));
    });
    return out;
  }

 private:
  std::size_t slot(int l1, int g) const noexcept {
    return static_cast<std::size_t>(l1) * static_cast<std::size_t>(depth_ + 1) + static_cast<std::size_t>(g);
  }

  template <bool kUnivariate>
  double log_density_levels(std::span<const double> u) const;

  DvineSpec spec_;
  int depth_ = 0;
  std::vector<MixtureKernel> kernels_;
  std::vector<int> table_;
};

/// Rolling state of the D-vine recursion. back(j)[g] holds u_{j | j+1..j+g}, the
/// earlier variable conditioned on the g variables that follow it.
class DvineLattice {
 public:
  explicit DvineLattice(const DvineModel& model)
      : model_(&model),
        depth_(model.depth()),
        ring_(static_cast<std::size_t>(depth_ + 1) * static_cast<std::size_t>(depth_)),
        scratch_(static_cast<std::size_t>(depth_)) {}

  void reset() noexcept { next_ = 0; }
  std::size_t position() const noexcept { return next_; }
  /// Series of the next variable.
  int series() const noexcept { return static_cast<int>(next_ % static_cast<std::size_t>(model_->r())); }

  /// Conditional CDF of the next variable given everything pushed so far.
  /// Exact 0 and 1 map to themselves.
  double conditional_cdf(double u) const noexcept {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    double fwd = clamp_unit(u);
    const int levels = levels_now();
    const int l1 = series();
    for (int g = 1; g <= levels; ++g) {
      if (const auto* k = model_->pair(l1, g)) fwd = clamp_unit(k->h_first(back(next_ - g)[g - 1], fwd));
    }
    return fwd;
  }

  /// Inverse of conditional_cdf: h-function inverses applied from the deepest level down.
  double conditional_cdf_inv(double q) const {
    const int levels = levels_now();
    const int l1 = series();
    double t = q;
    for (int g = levels; g >= 1; --g) {
      if (const auto* k = model_->pair(l1, g)) t = k->h_inverse(t, back(next_ - g)[g - 1], Direction::kFirst);
    }
    return t;
  }

  /// Log conditional density of the next variable at u, without advancing.
  double conditional_logpdf(double u) { return step(u, false); }

  /// Appends u as the next variable; returns its log conditional density.
  double push(double u) { return step(u, true); }

 private:
  int levels_now() const noexcept {
    return static_cast<int>(std::min<std::size_t>(next_, static_cast<std::size_t>(depth_)));
  }

  double* back(std::size_t j) noexcept {
    return ring_.data() + (j % static_cast<std::size_t>(depth_ + 1)) * static_cast<std::size_t>(depth_);
  }
  const double* back(std::size_t j) const noexcept {
    return ring_.data() + (j % static_cast<std::size_t>(depth_ + 1)) * static_cast<std::size_t>(depth_);
  }

  double step(double u, bool commit) {
    u = clamp_unit(u);
    const int levels = levels_now();
    const int l1 = series();
    double fwd = u;
    double logc = 0.0;
    for (int g = 1; g <= levels; ++g) {
      const double x = back(next_ - g)[g - 1];
      const bool need_back = commit && g <= depth_ - 1;
      const bool need_fwd = g < levels;
      double new_back = x;
      double new_fwd = fwd;
      if (const auto* k = model_->pair(l1, g)) {
        const PairEval e = k->evaluate(x, fwd, true, need_fwd, need_back);
        if (!std::isfinite(e.logpdf)) {
          std::ostringstream os;
          os << "non-finite pair-copula density at variable " << next_ << ", gap " << g;
          throw NumericalFailure(os.str());
        }
        logc += e.logpdf;
        if (need_fwd) new_fwd = clamp_unit(e.h_first);
        if (need_back) new_back = clamp_unit(e.h_second);
      }
      if (need_back) scratch_[static_cast<std::size_t>(g)] = new_back;
      fwd = new_fwd;
    }
    if (commit) {
      for (int g = 1; g <= std::min(levels, depth_ - 1); ++g) back(next_ - g)[g] = scratch_[static_cast<std::size_t>(g)];
      back(next_)[0] = u;
      ++next_;
    }
    return logc;
  }

  const DvineModel* model_;
  int depth_;
  std::size_t next_ = 0;
  std::vector<double> ring_;
  std::vector<double> scratch_;
};

// Level g pairs the earlier variable j - g, conditioned on the g - 1 variables that
// follow it (back), with variable j conditioned on the g - 1 that precede it (fwd).
// Independence pairs carry both values to the next level unchanged.
template <bool kUnivariate>
double DvineModel::log_density_levels(std::span<const double> u) const {
  if (u.size() % static_cast<std::size_t>(r()) != 0) throw InvalidInput("log_density: length is not a multiple of r");
  const auto n = static_cast<Eigen::Index>(u.size());
  const Eigen::Index r_ = r();
  Eigen::ArrayXd cell(n);
  for (Eigen::Index j = 0; j < n; ++j) cell[j] = clamp_unit(u[static_cast<std::size_t>(j)]);
  const SideArrays cell_sides = SideArrays::of(cell);
  Eigen::ArrayXd fwd = cell, back = cell, next_fwd, next_back;
  PairBatch in;
  PairBatchOut out;
  std::vector<Eigen::Index> later;
  double acc = 0.0;
  const Eigen::Index top = std::min<Eigen::Index>(depth_, n - 1);
  for (Eigen::Index g = 1; g <= top; ++g) {
    const bool need_h = g < top;
    if (need_h) {
      next_fwd = fwd;
      next_back = back;
    }
    for (Eigen::Index l1 = 0; l1 < r_; ++l1) {
      const MixtureKernel* kernel = pair(static_cast<int>(l1), static_cast<int>(g));
      if (kernel == nullptr) continue;
      later.clear();
      for (Eigen::Index j = g + ((l1 - g) % r_ + r_) % r_; j < n; j += r_) later.push_back(j);
      const auto m = static_cast<Eigen::Index>(later.size());
      if (m == 0) continue;
      if constexpr (kUnivariate) {
        in.u = back.segment(0, m);
        in.v = fwd.segment(g, m);
        if (g == 1) {
          auto seg = [&](const SideArrays& s, Eigen::Index start, SideArrays& dst) {
            dst.x = s.x.segment(start, m);
            dst.lx = s.lx.segment(start, m);
            dst.xc = s.xc.segment(start, m);
            dst.lxc = s.lxc.segment(start, m);
          };
          seg(cell_sides, 0, in.su);
          seg(cell_sides, 1, in.sv);
        }
      } else {
        in.u.resize(m);
        in.v.resize(m);
        for (Eigen::Index i = 0; i < m; ++i) {
          in.u[i] = back[later[static_cast<std::size_t>(i)] - g];
          in.v[i] = fwd[later[static_cast<std::size_t>(i)]];
        }
        if (g == 1) {
          auto gather = [&](const SideArrays& s, Eigen::Index shift, SideArrays& dst) {
            dst.x.resize(m);
            dst.lx.resize(m);
            dst.xc.resize(m);
            dst.lxc.resize(m);
            for (Eigen::Index i = 0; i < m; ++i) {
              const Eigen::Index c = later[static_cast<std::size_t>(i)] - shift;
              dst.x[i] = s.x[c];
              dst.lx[i] = s.lx[c];
              dst.xc[i] = s.xc[c];
              dst.lxc[i] = s.lxc[c];
            }
          };
          gather(cell_sides, 1, in.su);
          gather(cell_sides, 0, in.sv);
        }
      }
      if (g > 1) {
        in.su = SideArrays::of(in.u);
        in.sv = SideArrays::of(in.v);
      }
      kernel->evaluate_batch(in, need_h, need_h, out);
      if (!out.logpdf.allFinite()) {
        Eigen::Index bad = 0;
        while (bad < m && std::isfinite(out.logpdf[bad])) ++bad;
        std::ostringstream os;
        os << "non-finite pair-copula density at variable " << later[static_cast<std::size_t>(bad)] << ", gap " << g;
        throw NumericalFailure(os.str());
      }
      acc += out.logpdf.sum();
      if (need_h) {
        for (Eigen::Index i = 0; i < m; ++i) {
          const Eigen::Index j = later[static_cast<std::size_t>(i)];
          next_fwd[j] = clamp_unit(out.h_first[i]);
          next_back[j - g] = clamp_unit(out.h_second[i]);
        }
      }
    }
    if (need_h) {
      fwd.swap(next_fwd);
      back.swap(next_back);
    }
  }
  return acc;
}

inline double DvineModel::log_density(std::span<const double> u) const {
  return r() == 1 ? log_density_levels<true>(u) : log_density_levels<false>(u);
}

inline double DvineModel::log_density_multivariate(std::span<const double> u) const {
  return log_density_levels<false>(u);
}

inline std::vector<double> DvineModel::simulate_path(int T, Stream& rng) const {
  const std::size_t n = static_cast<std::size_t>(r()) * static_cast<std::size_t>(T);
  std::vector<double> out(n);
  DvineLattice lattice(*this);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lattice.conditional_cdf_inv(rng.uniform());
    lattice.push(out[i]);
  }
  return out;
}

/// Conditional CDF of the variable that follows `history` (flattened PITs from index 0).
inline double conditional_cdf(double u, std::span<const double> history, const DvineModel& model) {
  DvineLattice lattice(model);
  for (double x : history) lattice.push(x);
  return lattice.conditional_cdf(u);
}

inline double conditional_cdf_inv(double q, std::span<const double> history, const DvineModel& model) {
  DvineLattice lattice(model);
  for (double x : history) lattice.push(x);
  return lattice.conditional_cdf_inv(q);
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

inline constexpr std::size_t kOracleMaxCells = 12;

/// Box Monte Carlo estimate of the joint mass P(a_i <= U_i < b_i for all i)
/// = prod(b - a) * E[c(U)] with U uniform on the box.
inline McEstimate discrete_loglik_oracle(const DvineModel& model, std::span<const double> lower,
                                         std::span<const double> upper, std::size_t n_mc, std::uint64_t seed) {
  const std::size_t n = lower.size();
  if (n != upper.size() || n == 0 || n % static_cast<std::size_t>(model.r()) != 0) {
    throw InvalidInput("oracle: box bounds do not match the model");
  }
  if (n > kOracleMaxCells) throw InvalidInput("oracle: at most 12 cells (T * r <= 12)");
  if (n_mc < 2) throw InvalidInput("oracle: need at least two Monte Carlo samples");
  double volume = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(upper[i] > lower[i])) throw InvalidInput("oracle: degenerate box");
    volume *= upper[i] - lower[i];
  }
  std::vector<double> values(n_mc);
  parallel_for(n_mc, [&](std::size_t s) {
    Stream rng(seed, StreamTag::kOracle, s);
    double u[kOracleMaxCells];
    for (std::size_t i = 0; i < n; ++i) u[i] = lower[i] + (upper[i] - lower[i]) * rng.uniform();
    values[s] = std::exp(model.log_density(std::span<const double>(u, n)));
  });
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n_mc);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n_mc - 1);
  return {volume * mean, volume * std::sqrt(var / static_cast<double>(n_mc))};
}

}  // namespace vbda
