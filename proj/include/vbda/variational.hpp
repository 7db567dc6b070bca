// SPDX-License-Identifier: Apache-2.0
#pragma once

// Variational Bayes data augmentation. The approximation factorizes as
// q(psi) * q(u): a factor-covariance Gaussian over the unconstrained copula
// parameters and one of three families over the latent PITs of discrete cells.
// Gradients of the lower bound use the score-function estimator with
// per-coordinate control variates and ADADELTA step sizes.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbda/common.hpp"
#include "vbda/data.hpp"
#include "vbda/dvine.hpp"
#include "vbda/paircopula.hpp"
#include "vbda/parallel.hpp"
#include "vbda/rng.hpp"

namespace vbda {

using json = nlohmann::json;

enum class LatentFamily { kVA1 = 1, kVA2 = 2, kVA3 = 3 };

inline LatentFamily latent_family_from_int(int v) {
  if (v < 1 || v > 3) throw InvalidInput("VA variant must be 1, 2 or 3");
  return static_cast<LatentFamily>(v);
}

// ---------------------------------------------------------------------------
// Factor Gaussian q(psi) = N(mu, B B' + D^2), B lower triangular n x K.

class FactorGaussian {
 public:
  FactorGaussian() = default;
  FactorGaussian(int n, int K) : mu(Eigen::VectorXd::Zero(n)), B(Eigen::MatrixXd::Zero(n, K)), d(Eigen::VectorXd::Ones(n)) {
    if (n < 1) throw InvalidInput("factor Gaussian needs at least one dimension");
    if (K < 0 || K >= n) {
      throw InvalidInput("number of factors K=" + std::to_string(K) + " must satisfy 0 <= K < n=" + std::to_string(n));
    }
  }

  int n() const noexcept { return static_cast<int>(mu.size()); }
  int K() const noexcept { return static_cast<int>(B.cols()); }

  /// Free entries of B: column j holds rows j..n-1.
  std::size_t vech_size() const noexcept {
    std::size_t s = 0;
    for (int j = 0; j < K(); ++j) s += static_cast<std::size_t>(n() - j);
    return s;
  }

  std::size_t num_params() const noexcept { return 2 * static_cast<std::size_t>(n()) + vech_size(); }

  /// Layout: mu, vech(B) column-wise, d.
  void pack(double* out) const {
    for (int i = 0; i < n(); ++i) *out++ = mu[i];
    for (int j = 0; j < K(); ++j) {
      for (int i = j; i < n(); ++i) *out++ = B(i, j);
    }
    for (int i = 0; i < n(); ++i) *out++ = d[i];
  }

  void unpack(const double* in) {
    for (int i = 0; i < n(); ++i) mu[i] = *in++;
    for (int j = 0; j < K(); ++j) {
      for (int i = j; i < n(); ++i) B(i, j) = *in++;
    }
    for (int i = 0; i < n(); ++i) d[i] = *in++;
  }

  Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd s = B * B.transpose();
    s.diagonal() += d.cwiseProduct(d);
    return s;
  }

  /// psi = mu + B z + d * eps.
  Eigen::VectorXd sample(Stream& rng) const {
    Eigen::VectorXd z(K());
    for (int j = 0; j < K(); ++j) z[j] = rng.normal();
    Eigen::VectorXd out = mu + B * z;
    for (int i = 0; i < n(); ++i) out[i] += d[i] * rng.normal();
    return out;
  }

  Eigen::VectorXd mu;
  Eigen::MatrixXd B;
  Eigen::VectorXd d;
};

/// Log density and score of a FactorGaussian, with the inverse covariance applied
/// through the Woodbury identity. Built once per parameter value.
class FactorGaussianScore {
 public:
  explicit FactorGaussianScore(const FactorGaussian& q) : q_(&q) {
    const int n = q.n();
    const int K = q.K();
    dinv2_ = q.d.cwiseProduct(q.d).cwiseInverse();
    Eigen::MatrixXd db = dinv2_.asDiagonal() * q.B;  // D^-2 B
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(K, K) + q.B.transpose() * db;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (K > 0 && llt.info() != Eigen::Success) throw NumericalFailure("factor Gaussian: Woodbury core not SPD");
    double logdet_m = 0.0;
    if (K > 0) {
      const Eigen::MatrixXd Lm = llt.matrixL();
      for (int j = 0; j < K; ++j) logdet_m += 2.0 * std::log(Lm(j, j));
      sinv_b_ = llt.solve(db.transpose()).transpose();  // Sigma^-1 B = D^-2 B M^-1
      core_ = db;                                       // D^-2 B, for Sigma^-1 x
      minv_ = llt.solve(Eigen::MatrixXd::Identity(K, K));
    } else {
      sinv_b_.resize(n, 0);
      core_.resize(n, 0);
      minv_.resize(0, 0);
    }
    double logdet = logdet_m;
    for (int i = 0; i < n; ++i) logdet += std::log(q.d[i] * q.d[i]);
    log_norm_ = -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * logdet;
    sinv_diag_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double corr = K > 0 ? core_.row(i) * minv_ * core_.row(i).transpose() : 0.0;
      sinv_diag_[i] = dinv2_[i] - corr;
    }
  }

  Eigen::VectorXd sigma_inv(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = dinv2_.cwiseProduct(x);
    if (q_->K() > 0) out -= core_ * (minv_ * (core_.transpose() * x));
    return out;
  }

  double logq(const Eigen::VectorXd& psi) const {
    const Eigen::VectorXd x = psi - q_->mu;
    return log_norm_ - 0.5 * x.dot(sigma_inv(x));
  }

  /// Writes the gradient w.r.t. (mu, vech(B), d) into out; returns log q.
  double score(const Eigen::VectorXd& psi, double* out) const {
    const int n = q_->n();
    const int K = q_->K();
    const Eigen::VectorXd x = psi - q_->mu;
    const Eigen::VectorXd a = sigma_inv(x);
    for (int i = 0; i < n; ++i) *out++ = a[i];
    if (K > 0) {
      const Eigen::VectorXd bta = q_->B.transpose() * a;
      for (int j = 0; j < K; ++j) {
        for (int i = j; i < n; ++i) *out++ = -sinv_b_(i, j) + a[i] * bta[j];
      }
    }
    for (int i = 0; i < n; ++i) *out++ = q_->d[i] * (-sinv_diag_[i] + a[i] * a[i]);
    return log_norm_ - 0.5 * x.dot(a);
  }

 private:
  const FactorGaussian* q_;
  Eigen::VectorXd dinv2_;
  Eigen::MatrixXd core_;
  Eigen::MatrixXd minv_;
  Eigen::MatrixXd sinv_b_;
  Eigen::VectorXd sinv_diag_;
  double log_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Latent families over the boxes [a_t, b_t) of the discrete cells.
//   VA1: independent uniforms.
//   VA2: u_t = a_t + (b_t - a_t) Phi(z_t), z_t ~ N(eta_t, exp(2 c_t)) independently.
//   VA3: as VA2 but z ~ N(eta, (L L')^-1) with L lower bidiagonal.

class LatentVA {
 public:
  LatentVA() = default;
  LatentVA(LatentFamily family, std::size_t n) : family_(family), n_(n) {
    if (family_ != LatentFamily::kVA1) eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (family_ == LatentFamily::kVA2) logomega = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (family_ == LatentFamily::kVA3) {
      l_diag = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
      l_band = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n > 0 ? n - 1 : 0));
    }
  }

  LatentFamily family() const noexcept { return family_; }
  std::size_t size() const noexcept { return n_; }

  bool consistent() const noexcept {
    const auto n = static_cast<Eigen::Index>(n_);
    switch (family_) {
      case LatentFamily::kVA1:
        return true;
      case LatentFamily::kVA2:
        return eta.size() == n && logomega.size() == n;
      case LatentFamily::kVA3:
        return eta.size() == n && l_diag.size() == n && l_band.size() == std::max<Eigen::Index>(n - 1, 0);
    }
    return false;
  }

  std::size_t num_params() const noexcept {
    switch (family_) {
      case LatentFamily::kVA1:
        return 0;
      case LatentFamily::kVA2:
        return 2 * n_;
      case LatentFamily::kVA3:
        return n_ == 0 ? 0 : 3 * n_ - 1;
    }
    return 0;
  }

  /// Layout: eta, then logomega (VA2) or L diagonal followed by L sub-diagonal (VA3).
  void pack(double* out) const {
    auto put = [&](const Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) *out++ = v[i];
    };
    if (family_ == LatentFamily::kVA1) return;
    put(eta);
    if (family_ == LatentFamily::kVA2) put(logomega);
    if (family_ == LatentFamily::kVA3) {
      put(l_diag);
      put(l_band);
    }
  }

  void unpack(const double* in) {
    auto get = [&](Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = *in++;
    };
    if (family_ == LatentFamily::kVA1) return;
    get(eta);
    if (family_ == LatentFamily::kVA2) get(logomega);
    if (family_ == LatentFamily::kVA3) {
      get(l_diag);
      get(l_band);
    }
  }

  /// Draws latent values inside the boxes. z receives the Gaussian draw (VA2/VA3).
  void sample(std::span<const double> lower, std::span<const double> upper, Stream& rng, std::span<double> u,
              std::span<double> z) const {
    const std::size_t n = n_;
    if (family_ == LatentFamily::kVA1) {
      for (std::size_t t = 0; t < n; ++t) u[t] = inside(lower[t], upper[t], rng.uniform());
      return;
    }
    if (family_ == LatentFamily::kVA2) {
      for (std::size_t t = 0; t < n; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        z[t] = eta[i] + std::exp(logomega[i]) * rng.normal();
      }
    } else {
      // z = eta + x with L' x = eps (upper bidiagonal back substitution).
      std::vector<double> eps(n);
      for (auto& e : eps) e = rng.normal();
      double next = 0.0;
      for (std::size_t k = n; k-- > 0;) {
        const auto i = static_cast<Eigen::Index>(k);
        const double band = k + 1 < n ? l_band[i] * next : 0.0;
        next = (eps[k] - band) / l_diag[i];
        z[k] = eta[i] + next;
      }
    }
    for (std::size_t t = 0; t < n; ++t) u[t] = inside(lower[t], upper[t], normal_cdf(z[t]));
  }

  /// log q(u) given the Gaussian draw z behind u (VA2/VA3) or u itself (VA1).
  /// When grad is non-null the score w.r.t. the latent parameters is written there.
  double score(std::span<const double> lower, std::span<const double> upper, std::span<const double> z,
               double* grad) const {
    const std::size_t n = n_;
    double logq = 0.0;
    for (std::size_t t = 0; t < n; ++t) logq -= std::log(upper[t] - lower[t]);
    if (family_ == LatentFamily::kVA1) return logq;
    if (family_ == LatentFamily::kVA2) {
      for (std::size_t t = 0; t < n; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        const double c = logomega[i];
        const double e = z[t] - eta[i];
        const double inv_var = std::exp(-2.0 * c);
        logq += 0.5 * z[t] * z[t] - c - 0.5 * e * e * inv_var;
        if (grad) {
          grad[t] = e * inv_var;
          grad[n + t] = inv_var * e * e - 1.0;
        }
      }
      return logq;
    }
    // VA3: w = L' e, log q(z) = sum log|L_tt| - |w|^2 / 2.
    std::vector<double> w(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto i = static_cast<Eigen::Index>(t);
      const double e = z[t] - eta[i];
      const double e_next = t + 1 < n ? z[t + 1] - eta[i + 1] : 0.0;
      w[t] = l_diag[i] * e + (t + 1 < n ? l_band[i] * e_next : 0.0);
      logq += std::log(std::abs(l_diag[i])) - 0.5 * w[t] * w[t] + 0.5 * z[t] * z[t];
    }
    if (grad) {
      for (std::size_t t = 0; t < n; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        const double e = z[t] - eta[i];
        // grad_eta = L w; grad L_tt = 1/L_tt - e_t w_t; grad L_{t+1,t} = -e_{t+1} w_t.
        grad[t] = l_diag[i] * w[t] + (t > 0 ? l_band[i - 1] * w[t - 1] : 0.0);
        grad[n + t] = 1.0 / l_diag[i] - e * w[t];
        if (t + 1 < n) grad[2 * n + t] = -(z[t + 1] - eta[i + 1]) * w[t];
      }
    }
    return logq;
  }

  Eigen::VectorXd eta;
  Eigen::VectorXd logomega;
  Eigen::VectorXd l_diag;
  Eigen::VectorXd l_band;

 private:
  static double inside(double a, double b, double p) noexcept {
    double u = a + (b - a) * p;
    if (u >= b) u = std::nextafter(b, a);
    if (u < a) u = a;
    return u;
  }

  LatentFamily family_ = LatentFamily::kVA1;
  std::size_t n_ = 0;
};

/// Complete variational parameter lambda = (lambda_a, lambda_b).
struct VariationalParams {
  FactorGaussian theta;
  LatentVA latent;

  std::size_t size() const noexcept { return theta.num_params() + latent.num_params(); }

  std::vector<double> flat() const {
    std::vector<double> out(size());
    theta.pack(out.data());
    latent.pack(out.data() + theta.num_params());
    return out;
  }

  void assign(std::span<const double> x) {
    if (x.size() != size()) throw InvalidInput("variational parameter vector has the wrong length");
    theta.unpack(x.data());
    latent.unpack(x.data() + theta.num_params());
  }

  json to_json() const {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json B = json::array();
    for (int i = 0; i < theta.n(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(theta.K()));
      for (int j = 0; j < theta.K(); ++j) row[static_cast<std::size_t>(j)] = theta.B(i, j);
      B.push_back(row);
    }
    json j{{"mu", vec(theta.mu)}, {"B", B}, {"d", vec(theta.d)}, {"variant", static_cast<int>(latent.family())},
           {"n_latent", latent.size()}};
    if (latent.family() != LatentFamily::kVA1) j["eta"] = vec(latent.eta);
    if (latent.family() == LatentFamily::kVA2) j["logomega"] = vec(latent.logomega);
    if (latent.family() == LatentFamily::kVA3) {
      j["L_diag"] = vec(latent.l_diag);
      j["L_band"] = vec(latent.l_band);
    }
    return j;
  }

  static VariationalParams from_json(const json& j) {
    auto vec = [](const json& a) {
      const auto v = a.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    VariationalParams p;
    const auto mu = vec(j.at("mu"));
    const auto& B = j.at("B");
    const int n = static_cast<int>(mu.size());
    const int K = B.empty() ? 0 : static_cast<int>(B[0].size());
    p.theta = FactorGaussian(n, K);
    p.theta.mu = mu;
    p.theta.d = vec(j.at("d"));
    if (static_cast<int>(B.size()) != n || p.theta.d.size() != n) throw InvalidInput("lambda: inconsistent sizes");
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) p.theta.B(i, k) = B[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    const auto family = latent_family_from_int(j.at("variant").get<int>());
    p.latent = LatentVA(family, j.at("n_latent").get<std::size_t>());
    if (family != LatentFamily::kVA1) p.latent.eta = vec(j.at("eta"));
    if (family == LatentFamily::kVA2) p.latent.logomega = vec(j.at("logomega"));
    if (family == LatentFamily::kVA3) {
      p.latent.l_diag = vec(j.at("L_diag"));
      p.latent.l_band = vec(j.at("L_band"));
    }
    if (!p.latent.consistent()) throw InvalidInput("lambda: latent block sizes do not match n_latent");
    return p;
  }
};

// ---------------------------------------------------------------------------

/// The augmented posterior h(psi, u) = c_DV(u | theta(psi)) * prior(psi) on the boxes.
class VbdaProblem {
 public:
  VbdaProblem(ParameterLayout layout, LatentBoxes boxes) : layout_(std::move(layout)), boxes_(std::move(boxes)) {
    if (boxes_.r != layout_.r()) throw InvalidInput("data has " + std::to_string(boxes_.r) + " series but the model has " + std::to_string(layout_.r()));
    if (boxes_.T < 2) throw InvalidInput("need at least two time points");
    for (std::size_t k = 0; k < boxes_.n_latent(); ++k) {
      const std::size_t c = boxes_.cell_of[k];
      latent_lower_.push_back(boxes_.lower[c]);
      latent_upper_.push_back(boxes_.upper[c]);
    }
  }

  const ParameterLayout& layout() const noexcept { return layout_; }
  const LatentBoxes& boxes() const noexcept { return boxes_; }
  std::size_t n_theta() const noexcept { return layout_.n_free(); }
  std::size_t n_latent() const noexcept { return boxes_.n_latent(); }
  std::span<const double> latent_lower() const noexcept { return latent_lower_; }
  std::span<const double> latent_upper() const noexcept { return latent_upper_; }

  /// Full flattened PIT vector with continuous cells fixed.
  void fill(std::span<const double> latent, std::span<double> full) const {
    for (std::size_t c = 0; c < boxes_.cells(); ++c) {
      const int k = boxes_.latent_of[c];
      full[c] = k >= 0 ? latent[static_cast<std::size_t>(k)] : boxes_.lower[c];
    }
  }

  double log_h(std::span<const double> psi, std::span<const double> latent) const {
    std::vector<double> full(boxes_.cells());
    fill(latent, full);
    const DvineModel model(layout_.materialize(psi));
    return model.log_density(full) + log_prior_psi(psi);
  }

 private:
  ParameterLayout layout_;
  LatentBoxes boxes_;
  std::vector<double> latent_lower_;
  std::vector<double> latent_upper_;
};

struct VBConfig {
  int S = 500;
  int steps = 5000;
  int K = 3;
  LatentFamily variant = LatentFamily::kVA3;
  double epsilon = 1e-6;
  double zeta = 0.95;
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  std::string checkpoint_path;
  double max_drop_fraction = 0.1;
  double init_psi = logit(0.01);
  double init_d = std::sqrt(0.1);

  void validate() const {
    if (S < 2) throw InvalidInput("S must be at least 2");
    if (steps < 1) throw InvalidInput("steps must be at least 1");
    if (K < 0) throw InvalidInput("K must be nonnegative");
    if (!(epsilon > 0.0) || !(zeta > 0.0 && zeta < 1.0)) throw InvalidInput("invalid ADADELTA constants");
  }

  json to_json() const {
    return json{{"S", S},
                {"steps", steps},
                {"K", K},
                {"VA", static_cast<int>(variant)},
                {"epsilon", epsilon},
                {"zeta", zeta},
                {"seed", seed},
                {"checkpoint_every", checkpoint_every}};
  }

  static VBConfig from_json(const json& j) {
    VBConfig c;
    c.S = j.at("S").get<int>();
    c.steps = j.at("steps").get<int>();
    c.K = j.at("K").get<int>();
    c.variant = latent_family_from_int(j.at("VA").get<int>());
    c.epsilon = j.at("epsilon").get<double>();
    c.zeta = j.at("zeta").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.value("checkpoint_every", 500);
    return c;
  }
};

/// Starting point: near-independence copula parameters, B = 0, D = sqrt(0.1) I,
/// eta = 0, log omega = 0, L = I.
template <class Target>
VariationalParams initial_params(const Target& problem, const VBConfig& config) {
  VariationalParams p;
  const int n = static_cast<int>(problem.n_theta());
  p.theta = FactorGaussian(n, config.K);
  p.theta.mu.setConstant(config.init_psi);
  p.theta.d.setConstant(config.init_d);
  p.latent = LatentVA(config.variant, problem.n_latent());
  return p;
}

// ---------------------------------------------------------------------------

struct AdadeltaState {
  std::vector<double> eg2;
  std::vector<double> ed2;
  double epsilon = 1e-6;
  double zeta = 0.95;

  AdadeltaState() = default;
  AdadeltaState(std::size_t n, double eps, double z) : eg2(n, 0.0), ed2(n, 0.0), epsilon(eps), zeta(z) {}

  /// E(g^2) is refreshed first, then rho and the update, then E(delta^2).
  std::vector<double> step(std::span<const double> g) {
    std::vector<double> delta(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      eg2[i] = zeta * eg2[i] + (1.0 - zeta) * g[i] * g[i];
      const double rho = std::sqrt(ed2[i] + epsilon) / std::sqrt(eg2[i] + epsilon);
      delta[i] = rho * g[i];
      ed2[i] = zeta * ed2[i] + (1.0 - zeta) * delta[i] * delta[i];
    }
    return delta;
  }
};

/// S Monte Carlo draws from q with their lower-bound integrands and scores.
struct SampleBatch {
  std::size_t S = 0;
  std::size_t m = 0;               ///< gradient length
  std::vector<double> f;           ///< log h - log q per sample
  std::vector<double> grad;        ///< S x m scores, row-major
  std::vector<unsigned char> ok;   ///< finite and evaluable
  std::size_t dropped = 0;

  std::span<const double> score(std::size_t s) const { return {grad.data() + s * m, m}; }
};

/// Draws S samples with streams keyed by (seed, tag, step, sample). Target provides
/// n_theta(), n_latent(), latent_lower(), latent_upper() and log_h(psi, latent);
/// VbdaProblem is the model target.
template <class Target>
SampleBatch draw_samples(const Target& problem, const VariationalParams& params, std::size_t S,
                                std::uint64_t seed, StreamTag tag, std::uint64_t step) {
  SampleBatch batch;
  batch.S = S;
  batch.m = params.size();
  batch.f.assign(S, 0.0);
  batch.grad.assign(S * batch.m, 0.0);
  batch.ok.assign(S, 0);
  const FactorGaussianScore qa(params.theta);
  const std::size_t na = params.theta.num_params();
  const std::size_t nl = problem.n_latent();
  const auto lower = problem.latent_lower();
  const auto upper = problem.latent_upper();
  parallel_for(S, [&](std::size_t s) {
    Stream rng(seed, tag, step, s);
    double* g = batch.grad.data() + s * batch.m;
    try {
      const Eigen::VectorXd psi = params.theta.sample(rng);
      std::vector<double> u(nl), z(nl);
      params.latent.sample(lower, upper, rng, u, z);
      const double logq_a = qa.score(psi, g);
      const double logq_b = params.latent.score(lower, upper, z.empty() ? std::span<const double>() : std::span<const double>(z), g + na);
      const double lh = problem.log_h(std::span<const double>(psi.data(), static_cast<std::size_t>(psi.size())), u);
      const double f = lh - logq_a - logq_b;
      bool finite = std::isfinite(f);
      for (std::size_t i = 0; i < batch.m && finite; ++i) finite = std::isfinite(g[i]);
      if (finite) {
        batch.f[s] = f;
        batch.ok[s] = 1;
      }
    } catch (const NumericalFailure&) {
    } catch (const InvalidParameter&) {
    }
  });
  for (std::size_t s = 0; s < S; ++s) {
    if (!batch.ok[s]) {
      ++batch.dropped;
      std::fill(batch.grad.begin() + static_cast<std::ptrdiff_t>(s * batch.m),
                batch.grad.begin() + static_cast<std::ptrdiff_t>((s + 1) * batch.m), 0.0);
    }
  }
  return batch;
}

/// varsigma_i = Cov(f G_i, G_i) / Var(G_i) over the retained samples; 0 when Var < 1e-12.
inline std::vector<double> control_variates(const SampleBatch& batch) {
  std::vector<double> cv(batch.m, 0.0);
  const std::size_t n = batch.S - batch.dropped;
  if (n < 2) return cv;
  std::vector<double> mean_g(batch.m, 0.0), mean_fg(batch.m, 0.0);
  for (std::size_t s = 0; s < batch.S; ++s) {
    if (!batch.ok[s]) continue;
    const auto g = batch.score(s);
    for (std::size_t i = 0; i < batch.m; ++i) {
      mean_g[i] += g[i];
      mean_fg[i] += batch.f[s] * g[i];
    }
  }
  for (std::size_t i = 0; i < batch.m; ++i) {
    mean_g[i] /= static_cast<double>(n);
    mean_fg[i] /= static_cast<double>(n);
  }
  std::vector<double> cov(batch.m, 0.0), var(batch.m, 0.0);
  for (std::size_t s = 0; s < batch.S; ++s) {
    if (!batch.ok[s]) continue;
    const auto g = batch.score(s);
    for (std::size_t i = 0; i < batch.m; ++i) {
      const double dg = g[i] - mean_g[i];
      cov[i] += (batch.f[s] * g[i] - mean_fg[i]) * dg;
      var[i] += dg * dg;
    }
  }
  for (std::size_t i = 0; i < batch.m; ++i) {
    const double v = var[i] / static_cast<double>(n - 1);
    cv[i] = v < 1e-12 ? 0.0 : (cov[i] / static_cast<double>(n - 1)) / v;
  }
  return cv;
}

/// g_i = mean over retained samples of (f - varsigma_i) * G_i.
inline std::vector<double> gradient_estimate(const SampleBatch& batch, std::span<const double> cv) {
  std::vector<double> g(batch.m, 0.0);
  const std::size_t n = batch.S - batch.dropped;
  if (n == 0) return g;
  for (std::size_t s = 0; s < batch.S; ++s) {
    if (!batch.ok[s]) continue;
    const auto sc = batch.score(s);
    for (std::size_t i = 0; i < batch.m; ++i) g[i] += (batch.f[s] - cv[i]) * sc[i];
  }
  for (auto& x : g) x /= static_cast<double>(n);
  return g;
}

inline double mean_retained(const SampleBatch& batch) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < batch.S; ++s) {
    if (batch.ok[s]) {
      acc += batch.f[s];
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

struct FitResult {
  VariationalParams lambda;
  std::vector<double> lb_trace;
  std::vector<double> cv;
  VBConfig config;
  std::size_t dropped_samples = 0;

  json to_json() const {
    return json{{"lambda", lambda.to_json()},
                {"lb_trace", lb_trace},
                {"cv", cv},
                {"config", config.to_json()},
                {"seed", config.seed},
                {"dropped_samples", dropped_samples}};
  }

  static FitResult from_json(const json& j) {
    FitResult r;
    r.lambda = VariationalParams::from_json(j.at("lambda"));
    r.lb_trace = j.at("lb_trace").get<std::vector<double>>();
    r.cv = j.at("cv").get<std::vector<double>>();
    r.config = VBConfig::from_json(j.at("config"));
    r.dropped_samples = j.value("dropped_samples", std::size_t{0});
    return r;
  }
};

/// Resumable optimizer state, written every config.checkpoint_every steps.
struct Checkpoint {
  int next_step = 0;
  std::vector<double> lambda;
  std::vector<double> eg2;
  std::vector<double> ed2;
  std::vector<double> cv;
  std::vector<double> lb_trace;
  std::size_t dropped_samples = 0;
  json config;

  json to_json() const {
    return json{{"format_version", kFormatVersion},
                {"kind", "vbda-checkpoint"},
                {"next_step", next_step},
                {"lambda", lambda},
                {"eg2", eg2},
                {"ed2", ed2},
                {"cv", cv},
                {"lb_trace", lb_trace},
                {"dropped_samples", dropped_samples},
                {"config", config}};
  }

  static Checkpoint from_json(const json& j) {
    if (j.value("format_version", -1) != kFormatVersion || j.value("kind", std::string()) != "vbda-checkpoint") {
      throw InvalidInput("not a compatible VBDA checkpoint");
    }
    Checkpoint c;
    c.next_step = j.at("next_step").get<int>();
    c.lambda = j.at("lambda").get<std::vector<double>>();
    c.eg2 = j.at("eg2").get<std::vector<double>>();
    c.ed2 = j.at("ed2").get<std::vector<double>>();
    c.cv = j.at("cv").get<std::vector<double>>();
    c.lb_trace = j.at("lb_trace").get<std::vector<double>>();
    c.dropped_samples = j.value("dropped_samples", std::size_t{0});
    c.config = j.at("config");
    return c;
  }

  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw InvalidInput("cannot write checkpoint '" + tmp + "'");
      out << to_json().dump();
    }
    std::rename(tmp.c_str(), path.c_str());
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open checkpoint '" + path + "'");
    return from_json(json::parse(in));
  }
};

/// Optional per-step observer: (step, lower bound estimate).
using StepObserver = std::function<void(int, double)>;

/// Stochastic gradient ascent on the lower bound. With `resume`, continues from a
/// checkpoint written by an identical configuration.
template <class Target>
FitResult fit(const Target& problem, const VBConfig& config, const Checkpoint* resume = nullptr,
                     const StepObserver& observer = {}) {
  config.validate();
  VariationalParams params = initial_params(problem, config);
  AdadeltaState ada(params.size(), config.epsilon, config.zeta);
  std::vector<double> cv;
  std::vector<double> lb_trace;
  lb_trace.reserve(static_cast<std::size_t>(config.steps));
  std::size_t dropped_total = 0;
  int start = 0;
  const auto S = static_cast<std::size_t>(config.S);

  if (resume) {
    if (resume->config != config.to_json()) throw InvalidInput("checkpoint was written with a different configuration");
    params.assign(resume->lambda);
    ada.eg2 = resume->eg2;
    ada.ed2 = resume->ed2;
    cv = resume->cv;
    lb_trace = resume->lb_trace;
    dropped_total = resume->dropped_samples;
    start = resume->next_step;
    if (ada.eg2.size() != params.size() || cv.size() != params.size()) throw InvalidInput("checkpoint size mismatch");
  } else {
    const auto warm = draw_samples(problem, params, S, config.seed, StreamTag::kVbWarmup, 0);
    cv = control_variates(warm);
  }

  auto checkpoint = [&](int next) {
    Checkpoint c{next, params.flat(), ada.eg2, ada.ed2, cv, lb_trace, dropped_total, config.to_json()};
    c.save(config.checkpoint_path);
  };

  std::vector<double> lambda = params.flat();
  for (int k = start; k < config.steps; ++k) {
    const auto batch = draw_samples(problem, params, S, config.seed, StreamTag::kVbSample, static_cast<std::uint64_t>(k));
    dropped_total += batch.dropped;
    if (static_cast<double>(batch.dropped) > config.max_drop_fraction * static_cast<double>(S)) {
      if (!config.checkpoint_path.empty()) checkpoint(k);
      throw NumericalFailure("step " + std::to_string(k + 1) + ": " + std::to_string(batch.dropped) + " of " +
                             std::to_string(S) + " samples were not finite");
    }
    const auto g = gradient_estimate(batch, cv);
    cv = control_variates(batch);
    lb_trace.push_back(mean_retained(batch));
    const auto delta = ada.step(g);
    for (std::size_t i = 0; i < lambda.size(); ++i) lambda[i] += delta[i];
    params.assign(lambda);
    if (observer) observer(k + 1, lb_trace.back());
    if (!config.checkpoint_path.empty() && config.checkpoint_every > 0 && (k + 1) % config.checkpoint_every == 0) {
      checkpoint(k + 1);
    }
  }
  return FitResult{params, lb_trace, cv, config, dropped_total};
}

/// count draws of psi from q(psi).
inline std::vector<Eigen::VectorXd> sample_theta(const FactorGaussian& q, std::size_t count, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> out(count);
  parallel_for(count, [&](std::size_t s) {
    Stream rng(seed, StreamTag::kPosterior, s);
    out[s] = q.sample(rng);
  });
  return out;
}

}  // namespace vbda
