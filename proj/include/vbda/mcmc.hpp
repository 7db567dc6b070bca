// SPDX-License-Identifier: Apache-2.0
#pragma once

// MCMC data augmentation. Each sweep makes one joint independence-type MH move on
// every latent PIT, proposed sequentially from the copula conditionals truncated to
// the boxes, followed by one random-walk MH move per pair-copula block in psi space.
//
// With F_i the conditional CDF of cell i given the cells before it, the proposal
// density is prod_i f_i(u_i) / (F_i(b_i) - F_i(a_i)) over latent cells, so the
// target-to-proposal ratio reduces to
//   W(u) = prod_{latent} (F_i(b_i) - F_i(a_i)) * prod_{continuous} f_i(u_i).
// The first cell has F_0(b) - F_0(a) = b - a under every state and cancels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbda/common.hpp"
#include "vbda/data.hpp"
#include "vbda/dvine.hpp"
#include "vbda/paircopula.hpp"
#include "vbda/rng.hpp"

namespace vbda {

using json = nlohmann::json;

inline constexpr double kMinConditionalMass = 1e-14;

struct McmcConfig {
  int burnin = 10000;
  int iterates = 20000;
  std::vector<double> rw_scales;  ///< one per block with free coordinates; empty = all init_scale
  double init_scale = 0.1;
  double target_acceptance = 0.234;
  double init_psi = logit(0.01);
  int stuck_window = 1000;
  double stuck_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const {
    if (burnin < 1 || iterates < 1) throw InvalidInput("burnin and iterates must be at least 1");
    if (!(init_scale > 0.0)) throw InvalidInput("random-walk scale must be positive");
    for (double s : rw_scales) {
      if (!(s > 0.0)) throw InvalidInput("random-walk scales must be positive");
    }
    if (stuck_window < 1) throw InvalidInput("stuck window must be at least 1");
  }

  json to_json() const {
    return json{{"burnin", burnin},     {"iterates", iterates},         {"rw_scales", rw_scales},
                {"init_scale", init_scale}, {"target_acceptance", target_acceptance}, {"init_psi", init_psi},
                {"stuck_window", stuck_window}, {"stuck_rate", stuck_rate},     {"seed", seed}};
  }
};

/// log W and log c of a full PIT vector under one model.
struct StateWeights {
  double log_c = 0.0;
  double log_w = 0.0;
};

struct ChainState {
  std::vector<double> psi;
  std::vector<double> u;  ///< full flattened PIT vector, continuous cells fixed
  StateWeights weights;
  double log_prior = 0.0;
  std::uint64_t acc_u = 0;
  std::uint64_t acc_theta = 0;
};

/// Joint MH proposal for the latent cells.
struct UProposal {
  std::vector<double> u;
  StateWeights weights;
  bool ok = false;  ///< false after two zero-mass attempts
  int failures = 0;
};

namespace detail {

inline double inside_box(double u, double a, double b) noexcept {
  if (u >= b) u = std::nextafter(b, a);
  if (u < a) u = a;
  return u;
}

}  // namespace detail

/// log W(u) and log c(u) in one pass. Throws NumericalFailure when a latent cell has
/// no conditional mass.
inline StateWeights state_weights(const DvineModel& model, const LatentBoxes& boxes, std::span<const double> u) {
  DvineLattice lattice(model);
  StateWeights out;
  for (std::size_t i = 0; i < boxes.cells(); ++i) {
    if (boxes.is_latent(i)) {
      const double mass = lattice.conditional_cdf(boxes.upper[i]) - lattice.conditional_cdf(boxes.lower[i]);
      if (!(mass >= kMinConditionalMass)) throw NumericalFailure("latent cell without conditional mass");
      out.log_w += std::log(mass);
      out.log_c += lattice.push(u[i]);
    } else {
      const double lc = lattice.push(u[i]);
      out.log_c += lc;
      out.log_w += lc;
    }
  }
  return out;
}

/// Sequential inverse-CDF draw of every latent cell inside its box. A zero-mass
/// interval restarts the whole draw once with fresh randomness.
inline UProposal propose_u(const DvineModel& model, const LatentBoxes& boxes, std::span<const double> current,
                           Stream& rng) {
  UProposal prop;
  prop.u.assign(current.begin(), current.end());
  for (int attempt = 0; attempt < 2; ++attempt) {
    DvineLattice lattice(model);
    StateWeights w;
    bool failed = false;
    for (std::size_t i = 0; i < boxes.cells() && !failed; ++i) {
      if (boxes.is_latent(i)) {
        const double a = boxes.lower[i];
        const double b = boxes.upper[i];
        const double fa = lattice.conditional_cdf(a);
        const double mass = lattice.conditional_cdf(b) - fa;
        const double v = rng.uniform();
        if (!(mass >= kMinConditionalMass)) {
          failed = true;
          break;
        }
        w.log_w += std::log(mass);
        prop.u[i] = detail::inside_box(lattice.conditional_cdf_inv(fa + mass * v), a, b);
        w.log_c += lattice.push(prop.u[i]);
      } else {
        const double lc = lattice.push(prop.u[i]);
        w.log_c += lc;
        w.log_w += lc;
      }
    }
    if (!failed) {
      prop.weights = w;
      prop.ok = true;
      return prop;
    }
    ++prop.failures;
  }
  return prop;
}

/// MH acceptance with probability min(1, exp(log_ratio)).
inline bool accept_u(double log_ratio, Stream& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

/// Free psi coordinates grouped by pair-copula block, in block order.
inline std::vector<std::vector<std::size_t>> theta_blocks(const ParameterLayout& layout) {
  std::vector<std::vector<std::size_t>> blocks;
  std::size_t current = std::numeric_limits<std::size_t>::max();
  for (std::size_t f = 0; f < layout.n_free(); ++f) {
    const std::size_t b = layout.coordinate(f) / 5;
    if (b != current) {
      blocks.emplace_back();
      current = b;
    }
    blocks.back().push_back(f);
  }
  return blocks;
}

/// One Gaussian random-walk MH move on the coordinates of one block. Returns the
/// acceptance probability min(1, ratio); the state is updated in place on acceptance.
inline double rw_mh_theta(ChainState& state, const ParameterLayout& layout, const LatentBoxes& boxes,
                          std::span<const std::size_t> block, double scale, Stream& rng) {
  std::vector<double> psi = state.psi;
  for (std::size_t f : block) psi[f] += scale * rng.normal();
  const double log_prior = log_prior_psi(psi);
  StateWeights w;
  try {
    w = state_weights(DvineModel(layout.materialize(psi)), boxes, state.u);
  } catch (const NumericalFailure&) {
    return 0.0;
  } catch (const InvalidParameter&) {
    return 0.0;
  }
  // The random walk is symmetric, so there is no Hastings correction.
  const double log_ratio = w.log_c + log_prior - state.weights.log_c - state.log_prior;
  const double alpha = std::isnan(log_ratio) ? 0.0 : std::exp(std::min(0.0, log_ratio));
  if (accept_u(log_ratio, rng)) {
    state.psi = std::move(psi);
    state.weights = w;
    state.log_prior = log_prior;
    ++state.acc_theta;
  }
  return alpha;
}

struct McmcResult {
  explicit McmcResult(ParameterLayout l, McmcConfig c = {}) : layout(std::move(l)), config(std::move(c)) {}

  ParameterLayout layout;
  McmcConfig config;
  std::vector<std::vector<double>> psi_draws;  ///< one per retained sweep
  double u_acceptance = 0.0;                   ///< over retained sweeps
  std::vector<double> theta_acceptance;        ///< per block, over retained sweeps
  double u_acceptance_burnin = 0.0;
  std::vector<double> final_scales;
  std::uint64_t proposal_failures = 0;
  bool stuck = false;
  int stuck_sweep = -1;  ///< first sweep (1-based) of the first stuck window
  double min_window_rate = 1.0;

  std::size_t n_free() const noexcept { return layout.n_free(); }

  /// Constrained values of the free coordinates for every retained sweep.
  std::vector<std::vector<double>> constrained_draws() const {
    std::vector<std::vector<double>> out;
    out.reserve(psi_draws.size());
    for (const auto& psi : psi_draws) {
      std::vector<double> row(psi.size());
      for (std::size_t f = 0; f < psi.size(); ++f) row[f] = from_psi(layout.coordinate(f) % 5, psi[f]);
      out.push_back(std::move(row));
    }
    return out;
  }

  json diagnostics() const {
    return json{{"format_version", kFormatVersion},
                {"kind", "vbda-mcmc"},
                {"config", config.to_json()},
                {"layout", layout.to_json()},
                {"u_acceptance", u_acceptance},
                {"u_acceptance_burnin", u_acceptance_burnin},
                {"theta_acceptance", theta_acceptance},
                {"final_scales", final_scales},
                {"proposal_failures", proposal_failures},
                {"stuck", stuck},
                {"stuck_sweep", stuck_sweep},
                {"min_window_u_acceptance", min_window_rate},
                {"retained", psi_draws.size()}};
  }

  /// Header "sweep,<names>", one row per retained sweep, 17 significant digits.
  void write_draws_csv(std::ostream& out) const {
    out << "sweep";
    for (std::size_t f = 0; f < n_free(); ++f) out << ',' << layout.name(f);
    out << '\n';
    const auto draws = constrained_draws();
    char buf[32];
    for (std::size_t s = 0; s < draws.size(); ++s) {
      out << (s + 1);
      for (double x : draws[s]) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        out << ',' << buf;
      }
      out << '\n';
    }
  }

  void write_files(const std::string& csv_path, const std::string& json_path) const {
    {
      std::ofstream out(csv_path);
      if (!out) throw InvalidInput("cannot write '" + csv_path + "'");
      write_draws_csv(out);
    }
    std::ofstream out(json_path);
    if (!out) throw InvalidInput("cannot write '" + json_path + "'");
    out << diagnostics().dump(2) << '\n';
  }

  /// Reads draws written by write_draws_csv together with their sidecar.
  static McmcResult read_files(const std::string& csv_path, const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) throw InvalidInput("cannot open '" + json_path + "'");
    const json d = json::parse(js);
    if (d.value("format_version", -1) != kFormatVersion || d.value("kind", std::string()) != "vbda-mcmc") {
      throw InvalidInput("'" + json_path + "' is not a compatible MCMC diagnostics file");
    }
    McmcResult r(ParameterLayout::from_json(d.at("layout")));
    r.u_acceptance = d.at("u_acceptance").get<double>();
    r.stuck = d.at("stuck").get<bool>();
    std::ifstream in(csv_path);
    if (!in) throw InvalidInput("cannot open '" + csv_path + "'");
    std::string line;
    std::getline(in, line);
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<double> psi;
      std::size_t pos = line.find(',');
      for (std::size_t f = 0; f < r.n_free(); ++f) {
        if (pos == std::string::npos) throw InvalidInput(csv_path + ":" + std::to_string(line_no) + ": too few columns");
        const std::size_t next = line.find(',', pos + 1);
        const double x = std::stod(line.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1));
        psi.push_back(to_psi(r.layout.coordinate(f) % 5, x));
        pos = next;
      }
      r.psi_draws.push_back(std::move(psi));
    }
    return r;
  }
};

/// Optional progress callback: (sweep, u accepted this sweep).
using SweepObserver = std::function<void(int, bool)>;

/// Runs burnin + iterates sweeps. Random-walk scales adapt towards the target
/// acceptance during burnin with step n^-0.6 on the log scale and stay fixed after.
inline McmcResult run_sampler(const LatentBoxes& boxes, const ParameterLayout& layout, const McmcConfig& config,
                              const SweepObserver& observer = {}) {
  config.validate();
  if (boxes.r != layout.r()) throw InvalidInput("data and model disagree on the number of series");
  const auto blocks = theta_blocks(layout);
  std::vector<double> log_scale(blocks.size(), std::log(config.init_scale));
  if (!config.rw_scales.empty()) {
    if (config.rw_scales.size() != blocks.size()) {
      throw InvalidInput("expected " + std::to_string(blocks.size()) + " random-walk scales");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) log_scale[b] = std::log(config.rw_scales[b]);
  }

  Stream rng(config.seed, StreamTag::kMcmc);
  ChainState state;
  state.psi.assign(layout.n_free(), config.init_psi);
  state.log_prior = log_prior_psi(state.psi);
  McmcResult result(layout, config);
  {
    // Start from one proposal draw at the initial parameters.
    const DvineModel model(layout.materialize(state.psi));
    auto init = propose_u(model, boxes, boxes.midpoint_fill(), rng);
    result.proposal_failures += static_cast<std::uint64_t>(init.failures);
    if (!init.ok) throw NumericalFailure("could not initialize the latent PITs");
    state.u = std::move(init.u);
    state.weights = init.weights;
  }

  const int total = config.burnin + config.iterates;
  std::vector<std::uint64_t> theta_acc(blocks.size(), 0);
  std::uint64_t u_acc_kept = 0, u_acc_burn = 0;
  int window_acc = 0, window_len = 0;
  result.psi_draws.reserve(static_cast<std::size_t>(config.iterates));

  for (int sweep = 1; sweep <= total; ++sweep) {
    const bool burn = sweep <= config.burnin;
    bool accepted = false;
    {
      const DvineModel model(layout.materialize(state.psi));
      auto prop = propose_u(model, boxes, state.u, rng);
      result.proposal_failures += static_cast<std::uint64_t>(prop.failures);
      if (prop.ok && accept_u(prop.weights.log_w - state.weights.log_w, rng)) {
        state.u = std::move(prop.u);
        state.weights = prop.weights;
        ++state.acc_u;
        accepted = true;
      }
    }
    if (accepted) (burn ? u_acc_burn : u_acc_kept) += 1;
    for (std::size_t i = 0; i < boxes.cells(); ++i) {
      if (!(state.u[i] >= boxes.lower[i] && (state.u[i] < boxes.upper[i] || !boxes.is_latent(i)))) {
        throw NumericalFailure("latent PIT left its box at sweep " + std::to_string(sweep));
      }
    }

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::uint64_t before = state.acc_theta;
      const double alpha = rw_mh_theta(state, layout, boxes, blocks[b], std::exp(log_scale[b]), rng);
      if (burn) {
        log_scale[b] += std::pow(static_cast<double>(sweep), -0.6) * (alpha - config.target_acceptance);
      } else if (state.acc_theta != before) {
        ++theta_acc[b];
      }
    }

    window_acc += accepted ? 1 : 0;
    if (++window_len == config.stuck_window) {
      const double rate = static_cast<double>(window_acc) / window_len;
      result.min_window_rate = std::min(result.min_window_rate, rate);
      if (rate < config.stuck_rate && !result.stuck) {
        result.stuck = true;
        result.stuck_sweep = sweep - config.stuck_window + 1;
      }
      window_acc = 0;
      window_len = 0;
    }
    if (!burn) result.psi_draws.push_back(state.psi);
    if (observer) observer(sweep, accepted);
  }

  result.u_acceptance = static_cast<double>(u_acc_kept) / config.iterates;
  result.u_acceptance_burnin = static_cast<double>(u_acc_burn) / config.burnin;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    result.theta_acceptance.push_back(static_cast<double>(theta_acc[b]) / config.iterates);
    result.final_scales.push_back(std::exp(log_scale[b]));
  }
  return result;
}

}  // namespace vbda
