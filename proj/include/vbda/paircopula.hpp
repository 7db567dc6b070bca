// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bivariate building blocks of the D-vine: the Gumbel copula parameterized by
// Kendall's tau, its 180 degree rotation, the convex Gumbel, and the mixture
//
//   c_mix(u, v) = w * c_cg(u, v; tau_a, delta_a) + (1 - w) * c_cg(1 - u, v; tau_b, delta_b)
//
// which puts a Gumbel in every 90 degree rotation. All density work is done in
// log space on arguments clamped to (kEpsU, 1 - kEpsU).

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>

#include <Eigen/Core>

#include "vbda/common.hpp"

namespace vbda {

inline constexpr double kTauMax = 0.99;

struct GumbelParam {
  double tau = 0.0;

  /// Gumbel generator parameter theta = 1 / (1 - tau) in [1, 100].
  double theta() const noexcept { return 1.0 / (1.0 - tau); }
  bool independent() const noexcept { return tau == 0.0; }
};

struct ConvexGumbelParam {
  double tau = 0.0;
  double delta = 1.0;
};

/// Five-parameter mixture. Array order everywhere: (tau_a, delta_a, tau_b, delta_b, w).
struct MixtureParam {
  ConvexGumbelParam a;
  ConvexGumbelParam b;
  double w = 1.0;

  static MixtureParam independence() noexcept { return MixtureParam{}; }

  static MixtureParam gumbel(double tau) noexcept { return MixtureParam{{tau, 1.0}, {0.0, 1.0}, 1.0}; }

  static MixtureParam from_array(std::span<const double, 5> x) noexcept {
    return MixtureParam{{x[0], x[1]}, {x[2], x[3]}, x[4]};
  }

  std::array<double, 5> to_array() const noexcept { return {a.tau, a.delta, b.tau, b.delta, w}; }

  bool independent() const noexcept {
    return (a.tau == 0.0 || w == 0.0) && (b.tau == 0.0 || w == 1.0);
  }

  void validate() const {
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    auto tau_ok = [](double t) { return t >= 0.0 && t <= kTauMax; };
    if (!in_unit(w)) throw InvalidParameter("mixture weight w outside [0,1]: " + std::to_string(w));
    if (!in_unit(a.delta) || !in_unit(b.delta)) throw InvalidParameter("convex Gumbel delta outside [0,1]");
    if (!tau_ok(a.tau) || !tau_ok(b.tau)) throw InvalidParameter("Kendall tau outside [0, 0.99]");
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "(tau_a=" << a.tau << ", delta_a=" << a.delta << ", tau_b=" << b.tau << ", delta_b=" << b.delta
       << ", w=" << w << ")";
    return os.str();
  }
};

enum class Direction {
  kFirst,   ///< dC(u,v)/du: distribution of the second argument given the first.
  kSecond,  ///< dC(u,v)/dv: distribution of the first argument given the second.
};

namespace detail {

/// -log(u) and log(-log(u)) for one argument of a Gumbel evaluation.
struct Side {
  double x;
  double lx;
};

inline Side side_of(double u) noexcept {
  const double x = -std::log(u);
  return {x, std::log(x)};
}

inline Side side_of_complement(double u) noexcept {
  const double x = -std::log1p(-u);
  return {x, std::log(x)};
}

/// Gumbel pieces shared between density, h-functions and CDF.
struct GumbelCore {
  double log_s;  // log(x^theta + y^theta)
  double a;      // (x^theta + y^theta)^(1/theta)
};

inline GumbelCore gumbel_core(double theta, Side s, Side t) noexcept {
  const double log_s = log_add_exp(theta * s.lx, theta * t.lx);
  return {log_s, std::exp(log_s / theta)};
}

inline double gumbel_logpdf_core(double theta, Side s, Side t, GumbelCore c) noexcept {
  return -c.a + (s.x + t.x) + (theta - 1.0) * (s.lx + t.lx) + (1.0 / theta - 2.0) * c.log_s +
         std::log(c.a + theta - 1.0);
}

/// dC/d(first) at (s, t); swap arguments for the other direction.
inline double gumbel_h_core(double theta, Side s, GumbelCore c) noexcept {
  return std::exp(-c.a + s.x + (theta - 1.0) * s.lx + (1.0 / theta - 1.0) * c.log_s);
}

}  // namespace detail

inline double gumbel_cdf(double u, double v, GumbelParam p) noexcept {
  if (u <= 0.0 || v <= 0.0) return 0.0;
  if (u >= 1.0) return v;
  if (v >= 1.0) return u;
  u = clamp_unit(u);
  v = clamp_unit(v);
  if (p.independent()) return u * v;
  const double theta = p.theta();
  const auto c = detail::gumbel_core(theta, detail::side_of(u), detail::side_of(v));
  return std::exp(-c.a);
}

inline double gumbel_logpdf(double u, double v, GumbelParam p) noexcept {
  if (p.independent()) return 0.0;
  u = clamp_unit(u);
  v = clamp_unit(v);
  const double theta = p.theta();
  const auto su = detail::side_of(u);
  const auto sv = detail::side_of(v);
  return detail::gumbel_logpdf_core(theta, su, sv, detail::gumbel_core(theta, su, sv));
}

/// Evaluation results of one mixture kernel at a point.
struct PairEval {
  double logpdf = 0.0;
  double h_first = 0.0;   // dC/du
  double h_second = 0.0;  // dC/dv
};

/// Elementwise -log u, log(-log u) and the same for 1 - u.
struct SideArrays {
  Eigen::ArrayXd x, lx, xc, lxc;

  /// u must already be clamped to (kEpsU, 1 - kEpsU).
  static SideArrays of(const Eigen::ArrayXd& u) {
    SideArrays s;
    s.x = -u.log();
    s.lx = s.x.log();
    s.xc = -log1p_neg(u);
    s.lxc = s.xc.log();
    return s;
  }

  /// log(1 - u) as log(y) - ((y - 1) + u) / y with y = 1 - u, which keeps log1p
  /// accuracy and vectorizes.
  static Eigen::ArrayXd log1p_neg(const Eigen::ArrayXd& u) {
    const Eigen::ArrayXd y = 1.0 - u;
    return y.log() - ((y - 1.0) + u) / y;
  }

  Eigen::Index size() const noexcept { return x.size(); }
};

/// m argument pairs for a batched evaluation, clamped, with their sides.
struct PairBatch {
  Eigen::ArrayXd u, v;
  SideArrays su, sv;
};

struct PairBatchOut {
  Eigen::ArrayXd logpdf, h_first, h_second;
};

/// Precomputed evaluator of c_mix for one parameter value. Immutable; cheap to copy.
///
/// The four Gumbel terms, with u' = 1 - u and v' = 1 - v, are
///   [0] w (delta_a)     at (u , v )   [1] w (1 - delta_a)     at (u', v')
///   [2] (1-w) delta_b   at (u', v )   [3] (1-w) (1 - delta_b) at (u , v')
class MixtureKernel {
 public:
  MixtureKernel() : MixtureKernel(MixtureParam::independence()) {}

  explicit MixtureKernel(const MixtureParam& p) : param_(p) {
    p.validate();
    independent_ = p.independent();
    const double wt[4] = {p.w * p.a.delta, p.w * (1.0 - p.a.delta), (1.0 - p.w) * p.b.delta,
                          (1.0 - p.w) * (1.0 - p.b.delta)};
    const double tau[4] = {p.a.tau, p.a.tau, p.b.tau, p.b.tau};
    for (int k = 0; k < 4; ++k) {
      weight_[k] = wt[k];
      active_[k] = wt[k] > 0.0;
      log_weight_[k] = active_[k] ? std::log(wt[k]) : -INFINITY;
      theta_[k] = 1.0 / (1.0 - tau[k]);
      indep_[k] = tau[k] == 0.0;
    }
    need_u_ = (active_[0] && !indep_[0]) || (active_[3] && !indep_[3]);
    need_uc_ = (active_[1] && !indep_[1]) || (active_[2] && !indep_[2]);
    need_v_ = (active_[0] && !indep_[0]) || (active_[2] && !indep_[2]);
    need_vc_ = (active_[1] && !indep_[1]) || (active_[3] && !indep_[3]);
  }

  const MixtureParam& param() const noexcept { return param_; }
  bool independent() const noexcept { return independent_; }

  double logpdf(double u, double v) const noexcept { return evaluate(u, v, true, false, false).logpdf; }
  double h_first(double u, double v) const noexcept { return evaluate(u, v, false, true, false).h_first; }
  double h_second(double u, double v) const noexcept { return evaluate(u, v, false, false, true).h_second; }

  double h(double u, double v, Direction dir) const noexcept {
    return dir == Direction::kFirst ? h_first(u, v) : h_second(u, v);
  }

  /// Any subset of (log density, dC/du, dC/dv) at one point, sharing the logarithms.
  PairEval evaluate(double u, double v, bool want_pdf, bool want_h1, bool want_h2) const noexcept {
    u = clamp_unit(u);
    v = clamp_unit(v);
    PairEval out;
    if (independent_) {
      out.logpdf = 0.0;
      out.h_first = v;
      out.h_second = u;
      return out;
    }
    const double uc = 1.0 - u;
    const double vc = 1.0 - v;
    detail::Side su{}, suc{}, sv{}, svc{};
    if (need_u_) su = detail::side_of(u);
    if (need_uc_) suc = detail::side_of_complement(u);
    if (need_v_) sv = detail::side_of(v);
    if (need_vc_) svc = detail::side_of_complement(v);

    const detail::Side first[4] = {su, suc, suc, su};
    const detail::Side second[4] = {sv, svc, sv, svc};
    // Raw arguments of each term, for independence components.
    const double raw_first[4] = {u, uc, uc, u};
    const double raw_second[4] = {v, vc, v, vc};
    // Whether each term enters dC/du (dC/dv) as its own h-function or as 1 - h.
    constexpr bool flip_h1[4] = {false, true, false, true};
    constexpr bool flip_h2[4] = {false, true, true, false};

    double lp[4];
    double max_lp = -INFINITY;
    double h1 = 0.0, h2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (!active_[k]) continue;
      double term_lp, term_h1, term_h2;
      if (indep_[k]) {
        term_lp = 0.0;
        term_h1 = raw_second[k];
        term_h2 = raw_first[k];
      } else {
        const double th = theta_[k];
        const auto core = detail::gumbel_core(th, first[k], second[k]);
        term_lp = want_pdf ? detail::gumbel_logpdf_core(th, first[k], second[k], core) : 0.0;
        term_h1 = want_h1 ? detail::gumbel_h_core(th, first[k], core) : 0.0;
        term_h2 = want_h2 ? detail::gumbel_h_core(th, second[k], core) : 0.0;
      }
      lp[k] = log_weight_[k] + term_lp;
      max_lp = std::max(max_lp, lp[k]);
      h1 += weight_[k] * (flip_h1[k] ? 1.0 - term_h1 : term_h1);
      h2 += weight_[k] * (flip_h2[k] ? 1.0 - term_h2 : term_h2);
    }
    if (want_pdf) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (active_[k]) acc += std::exp(lp[k] - max_lp);
      }
      out.logpdf = max_lp + std::log(acc);
    }
    out.h_first = std::clamp(h1, 0.0, 1.0);
    out.h_second = std::clamp(h2, 0.0, 1.0);
    return out;
  }

  /// evaluate() over arrays. Mixture weights are combined as
  /// log sum_k exp(part_k) (a_k + theta_k - 1), which is the same log-sum-exp with the
  /// last Gumbel factor kept linear.
  void evaluate_batch(const PairBatch& in, bool want_h1, bool want_h2, PairBatchOut& out) const {
    const Eigen::Index m = in.u.size();
    if (independent_) {
      out.logpdf.setZero(m);
      if (want_h1) out.h_first = in.v;
      if (want_h2) out.h_second = in.u;
      return;
    }
    const Eigen::ArrayXd* fx[4] = {&in.su.x, &in.su.xc, &in.su.xc, &in.su.x};
    const Eigen::ArrayXd* flx[4] = {&in.su.lx, &in.su.lxc, &in.su.lxc, &in.su.lx};
    const Eigen::ArrayXd* sx[4] = {&in.sv.x, &in.sv.xc, &in.sv.x, &in.sv.xc};
    const Eigen::ArrayXd* slx[4] = {&in.sv.lx, &in.sv.lxc, &in.sv.lx, &in.sv.lxc};
    constexpr bool flip_h1[4] = {false, true, false, true};
    constexpr bool flip_h2[4] = {false, true, true, false};
    constexpr bool first_is_u[4] = {true, false, false, true};
    constexpr bool second_is_v[4] = {true, false, true, false};

    Eigen::ArrayXd part[4], mult[4];
    Eigen::ArrayXd A(m), B(m), log_s(m), a(m), term(m);
    if (want_h1) out.h_first.setZero(m);
    if (want_h2) out.h_second.setZero(m);
    Eigen::ArrayXd top = Eigen::ArrayXd::Constant(m, -INFINITY);
    for (int k = 0; k < 4; ++k) {
      if (!active_[k]) continue;
      if (indep_[k]) {
        part[k] = Eigen::ArrayXd::Constant(m, log_weight_[k]);
        mult[k] = Eigen::ArrayXd::Ones(m);
        if (want_h1) {
          term = second_is_v[k] ? in.v : 1.0 - in.v;
          out.h_first += weight_[k] * (flip_h1[k] ? 1.0 - term : term);
        }
        if (want_h2) {
          term = first_is_u[k] ? in.u : 1.0 - in.u;
          out.h_second += weight_[k] * (flip_h2[k] ? 1.0 - term : term);
        }
      } else {
        const double th = theta_[k];
        A = th * *flx[k];
        B = th * *slx[k];
        // log(x^th + y^th); the correction term lies in [0, log 2].
        log_s = A.max(B) + ((-(A - B).abs()).exp() + 1.0).log();
        a = (log_s / th).exp();
        part[k] = (log_weight_[k] - a) + (*fx[k] + *sx[k]) + (th - 1.0) * (*flx[k] + *slx[k]) +
                  (1.0 / th - 2.0) * log_s;
        mult[k] = a + (th - 1.0);
        if (want_h1) {
          term = (-a + *fx[k] + (th - 1.0) * *flx[k] + (1.0 / th - 1.0) * log_s).exp();
          out.h_first += weight_[k] * (flip_h1[k] ? 1.0 - term : term);
        }
        if (want_h2) {
          term = (-a + *sx[k] + (th - 1.0) * *slx[k] + (1.0 / th - 1.0) * log_s).exp();
          out.h_second += weight_[k] * (flip_h2[k] ? 1.0 - term : term);
        }
      }
      top = top.max(part[k]);
    }
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(m);
    for (int k = 0; k < 4; ++k) {
      if (active_[k]) acc += (part[k] - top).exp() * mult[k];
    }
    out.logpdf = top + acc.log();
    if (want_h1) out.h_first = out.h_first.max(0.0).min(1.0);
    if (want_h2) out.h_second = out.h_second.max(0.0).min(1.0);
  }

  /// Exact on the boundary of the unit square (grounded, uniform margins).
  double cdf(double u, double v) const noexcept {
    if (u <= 0.0 || v <= 0.0) return 0.0;
    if (u >= 1.0) return v;
    if (v >= 1.0) return u;
    u = clamp_unit(u);
    v = clamp_unit(v);
    if (independent_) return u * v;
    const double uc = 1.0 - u;
    const double vc = 1.0 - v;
    auto g = [&](int k, double s, double t) {
      if (!active_[k]) return 0.0;
      return gumbel_cdf(s, t, GumbelParam{k < 2 ? param_.a.tau : param_.b.tau});
    };
    const double cga = weight_[0] * g(0, u, v) + weight_[1] * (u + v - 1.0 + g(1, uc, vc));
    // v - C_cg_b(1 - u, v), expanded over the two convex components.
    const double cgb = (1.0 - param_.w) * v - weight_[2] * g(2, uc, v) - weight_[3] * (v - u + g(3, u, vc));
    return std::clamp(cga + cgb, 0.0, std::min(u, v));
  }

  /// Inverse of the h-function in its free argument. For kFirst, returns v with
  /// dC(cond, v)/du = q; for kSecond, returns u with dC(u, cond)/dv = q.
  double h_inverse(double q, double cond, Direction dir) const {
    if (!(q >= 0.0 && q <= 1.0)) {
      throw NumericalFailure("hfunc_inv: target outside [0,1]: " + std::to_string(q));
    }
    if (independent_) return clamp_unit(q);
    cond = clamp_unit(cond);
    double lo = kEpsU;
    double hi = 1.0 - kEpsU;
    double x = std::clamp(q, lo, hi);
    const bool first = dir == Direction::kFirst;
    double prev_abs_f = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      const PairEval e = first ? evaluate(cond, x, true, true, false) : evaluate(x, cond, true, false, true);
      const double f = (first ? e.h_first : e.h_second) - q;
      if (std::abs(f) <= 1e-15) return x;
      if (f > 0.0) {
        hi = x;
      } else {
        lo = x;
      }
      const double step = f / std::exp(e.logpdf);
      double next = x - step;
      const bool slow = std::abs(f) > 0.5 * prev_abs_f;
      prev_abs_f = std::abs(f);
      if (slow || !(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-14 * std::max(1.0, x) && std::abs(f) <= 1e-10) return next;
      if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * hi) return 0.5 * (lo + hi);
      x = next;
    }
    std::ostringstream os;
    os.precision(17);
    os << "hfunc_inv did not converge: q=" << q << " cond=" << cond << " params=" << param_.describe();
    throw NumericalFailure(os.str());
  }

 private:
  static constexpr int kMaxIterations = 200;

  MixtureParam param_;
  bool independent_ = true;
  double weight_[4] = {};
  double log_weight_[4] = {};
  double theta_[4] = {};
  bool active_[4] = {};
  bool indep_[4] = {};
  bool need_u_ = false, need_uc_ = false, need_v_ = false, need_vc_ = false;
};

inline double mix_logpdf(double u, double v, const MixtureParam& p) { return MixtureKernel(p).logpdf(u, v); }
inline double mix_cdf(double u, double v, const MixtureParam& p) { return MixtureKernel(p).cdf(u, v); }
inline double hfunc(double u, double v, const MixtureParam& p, Direction dir) { return MixtureKernel(p).h(u, v, dir); }
inline double hfunc_inv(double q, double cond, const MixtureParam& p, Direction dir) {
  return MixtureKernel(p).h_inverse(q, cond, dir);
}

// ---------------------------------------------------------------------------
// Unconstrained parameterization. Components map through psi(a) = log(a / (1 - a)),
// with the Kendall taus first scaled by 1/0.99 so the map covers (0, 0.99).

inline constexpr double kBoundaryNudge = 1e-8;

inline bool is_tau_component(std::size_t component) noexcept { return component == 0 || component == 2; }

inline double to_psi(std::size_t component, double value) noexcept {
  double a = is_tau_component(component) ? value / kTauMax : value;
  a = std::clamp(a, kBoundaryNudge, 1.0 - kBoundaryNudge);
  return logit(a);
}

inline double from_psi(std::size_t component, double psi) noexcept {
  const double a = logistic(psi);
  return is_tau_component(component) ? kTauMax * a : a;
}

using PsiBlock = std::array<double, 5>;

inline PsiBlock transform(const MixtureParam& p) noexcept {
  const auto x = p.to_array();
  PsiBlock out{};
  for (std::size_t c = 0; c < 5; ++c) out[c] = to_psi(c, x[c]);
  return out;
}

inline MixtureParam inverse_transform(std::span<const double, 5> psi) noexcept {
  std::array<double, 5> x{};
  for (std::size_t c = 0; c < 5; ++c) x[c] = from_psi(c, psi[c]);
  return MixtureParam::from_array(x);
}

/// Log density, in psi space, of independent uniform priors on the constrained parameters:
/// a standard logistic density per component (constant from the tau scaling dropped).
inline double log_prior_psi(std::span<const double> psi) noexcept {
  double acc = 0.0;
  for (double x : psi) {
    const double ax = std::abs(x);
    acc += -ax - 2.0 * std::log1p(std::exp(-ax));
  }
  return acc;
}

}  // namespace vbda
