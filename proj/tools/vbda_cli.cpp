// SPDX-License-Identifier: Apache-2.0
// Batch command-line front end: fitting, MCMC, prediction, Spearman reports,
// synthetic data and plot data.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vbda/vbda.hpp"

namespace fs = std::filesystem;
using namespace vbda;

namespace {

enum Exit : int { kOk = 0, kInputError = 2, kNumericalError = 3, kStuck = 4 };

constexpr const char* kLibraryVersion = "1.0.0";

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": not valid JSON (" + e.what() + ")");
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string with_suffix(const std::string& path, const std::string& ext, const std::string& suffix) {
  fs::path p(path);
  if (p.extension() == ext) p.replace_extension();
  return p.string() + suffix;
}

std::vector<SeriesKind> parse_types(const std::string& spec, int r) {
  std::vector<SeriesKind> kinds;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) kinds.push_back(series_kind_from_string(item));
  if (kinds.size() == 1 && r > 1) kinds.assign(static_cast<std::size_t>(r), kinds[0]);
  if (static_cast<int>(kinds.size()) != r) {
    throw InvalidInput("--types lists " + std::to_string(kinds.size()) + " series but the data has " +
                       std::to_string(r) + " columns");
  }
  return kinds;
}

json kinds_json(const std::vector<SeriesKind>& kinds) {
  json a = json::array();
  for (auto k : kinds) a.push_back(to_string(k));
  return a;
}

std::vector<SeriesKind> kinds_from_json(const json& a) {
  std::vector<SeriesKind> out;
  for (const auto& k : a) out.push_back(series_kind_from_string(k.get<std::string>()));
  return out;
}

json margins_json(const std::vector<Margin>& margins) {
  json a = json::array();
  for (const auto& m : margins) a.push_back(margin_to_json(m));
  return a;
}

std::vector<Margin> margins_from_json(const json& a) {
  std::vector<Margin> out;
  for (const auto& m : a) out.push_back(margin_from_json(m));
  return out;
}

void check_document(const json& j, const std::string& kind, const std::string& path) {
  if (j.value("kind", std::string()) != kind) {
    throw InvalidInput("'" + path + "' is not a " + kind + " file");
  }
  if (j.value("format_version", -1) != kFormatVersion) {
    throw InvalidInput("'" + path + "' was written by an incompatible library version");
  }
}

// ---------------------------------------------------------------------------
// Loaded results

struct Loaded {
  std::string path;
  json doc;
  ParameterLayout layout;
  std::vector<Margin> margins;
  std::vector<SeriesKind> kinds;
  std::optional<FitResult> vb;
  std::optional<McmcResult> chain;

  bool is_vb() const { return vb.has_value(); }
  std::string label() const { return fs::path(path).filename().string(); }
};

Loaded load_result(const std::string& path) {
  json doc = read_json(path);
  const std::string kind = doc.value("kind", std::string());
  if (kind != "vbda-fit" && kind != "vbda-mcmc") throw InvalidInput("'" + path + "' is neither a fit nor an MCMC file");
  check_document(doc, kind, path);
  try {
    Loaded l{path, doc, ParameterLayout::from_json(doc.at("layout")), margins_from_json(doc.at("margins")),
             kinds_from_json(doc.at("config").at("types")), std::nullopt, std::nullopt};
    if (kind == "vbda-fit") {
      l.vb = FitResult::from_json(doc.at("fit"));
      if (static_cast<std::size_t>(l.vb->lambda.theta.n()) != l.layout.n_free()) {
        throw InvalidInput("'" + path + "': lambda does not match the parameter layout");
      }
    } else {
      const auto csv = fs::path(path).parent_path() / doc.at("draws_file").get<std::string>();
      l.chain = McmcResult::read_files(csv.string(), path);
    }
    return l;
  } catch (const json::exception& e) {
    throw InvalidInput("'" + path + "': " + e.what());
  }
}

/// Posterior means of the constrained free coordinates and the full spec they imply.
DvineSpec posterior_mean_spec(const Loaded& l, std::size_t draws, std::uint64_t seed) {
  const auto sums = l.is_vb() ? posterior_summaries(l.layout, *l.vb, draws, seed) : posterior_summaries(*l.chain);
  auto flat = l.layout.materialize(std::vector<double>(l.layout.n_free(), 0.0)).flat();
  for (std::size_t f = 0; f < sums.size(); ++f) flat[l.layout.coordinate(f)] = sums[f].mean;
  return DvineSpec::from_flat(l.layout.r(), l.layout.p(), flat);
}

std::string summaries_csv(const std::vector<ParameterSummary>& sums) {
  std::string out = "name,mean,sd,q05,q50,q95,psi_mean,psi_sd\n";
  for (const auto& s : sums) {
    out += s.name + "," + num(s.mean) + "," + num(s.sd) + "," + num(s.q05) + "," + num(s.q50) + "," + num(s.q95) + "," +
           num(s.psi_mean) + "," + num(s.psi_sd) + "\n";
  }
  return out;
}

struct Prepared {
  SeriesData data;
  std::vector<SeriesKind> kinds;
  std::vector<Margin> margins;
  LatentBoxes boxes;
};

Prepared prepare(const std::string& input, const std::string& types, bool univariate) {
  Prepared p;
  p.data = read_series_csv(input);
  if (univariate && p.data.r != 1) {
    throw InvalidInput(input + ": fit-uni expects one column, found " + std::to_string(p.data.r) + " (use fit-multi)");
  }
  p.kinds = parse_types(types, p.data.r);
  p.margins = fit_margins(p.data, p.kinds);
  p.boxes = LatentBoxes::build(p.data, p.margins);
  return p;
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  int threads = 0;
  std::uint64_t seed = 1;
};

struct FitOptions {
  std::string input;
  std::string types = "discrete";
  std::string family = "gumbel_mix";
  int p = 1;
  int K = 3;
  int S = 500;
  int steps = 5000;
  int va = 3;
  std::string output;
  std::string lb_trace;
  std::string checkpoint;
  bool resume = false;
  std::size_t summary_draws = 10000;
};

int cmd_fit(const FitOptions& o, const Common& c, bool univariate) {
  if (o.family != "gumbel_mix") throw InvalidInput("unsupported copula family '" + o.family + "'");
  VBConfig cfg;
  cfg.S = o.S;
  cfg.steps = o.steps;
  cfg.K = o.K;
  cfg.variant = latent_family_from_int(o.va);
  cfg.seed = c.seed;
  cfg.checkpoint_path = o.checkpoint;
  cfg.validate();
  const auto prep = prepare(o.input, o.types, univariate);
  const auto layout = ParameterLayout::all_free(prep.data.r, o.p);
  if (cfg.K >= static_cast<int>(layout.n_free())) {
    throw InvalidInput("K must be smaller than the number of copula parameters (" + std::to_string(layout.n_free()) + ")");
  }
  const VbdaProblem problem(layout, prep.boxes);

  std::optional<Checkpoint> resume;
  if (o.resume && !o.checkpoint.empty() && fs::exists(o.checkpoint)) resume = Checkpoint::load(o.checkpoint);
  const auto res = fit(problem, cfg, resume ? &*resume : nullptr);

  const auto sums = posterior_summaries(layout, res, o.summary_draws, splitmix64(c.seed ^ 0x5eedULL));
  json gamma_mean = json::array(), gamma_sd = json::array(), names = json::array();
  for (const auto& s : sums) {
    gamma_mean.push_back(s.mean);
    gamma_sd.push_back(s.sd);
    names.push_back(s.name);
  }
  const auto lj = res.lambda.to_json();
  json doc{{"format_version", kFormatVersion},
           {"kind", "vbda-fit"},
           {"library_version", kLibraryVersion},
           {"config",
            {{"command", univariate ? "fit-uni" : "fit-multi"},
             {"input", o.input},
             {"types", kinds_json(prep.kinds)},
             {"family", o.family},
             {"p", o.p},
             {"K", o.K},
             {"S", o.S},
             {"steps", o.steps},
             {"VA", o.va},
             {"seed", c.seed}}},
           {"data", {{"T", prep.data.T}, {"r", prep.data.r}, {"names", prep.data.names}}},
           {"layout", layout.to_json()},
           {"margins", margins_json(prep.margins)},
           {"parameter_names", names},
           {"gamma_mean", gamma_mean},
           {"gamma_sd", gamma_sd},
           {"mu", lj.at("mu")},
           {"B", lj.at("B")},
           {"D", lj.at("d")},
           {"muz", res.lambda.latent.family() == LatentFamily::kVA1 ? json::array() : lj.at("eta")},
           {"lambda", res.lambda.flat()},
           {"LB", res.lb_trace},
           {"fit", res.to_json()}};
  if (cfg.variant == LatentFamily::kVA2) doc["logsigmaz"] = lj.at("logomega");
  if (cfg.variant == LatentFamily::kVA3) doc["C"] = {{"diag", lj.at("L_diag")}, {"subdiag", lj.at("L_band")}};
  write_json(o.output, doc);

  std::string trace = "step,lb\n";
  for (std::size_t k = 0; k < res.lb_trace.size(); ++k) trace += std::to_string(k + 1) + "," + num(res.lb_trace[k]) + "\n";
  const std::string trace_path = o.lb_trace.empty() ? with_suffix(o.output, ".json", "_lb_trace.csv") : o.lb_trace;
  write_text(trace_path, trace);
  std::cout << "fit written to " << o.output << " (" << res.lb_trace.size() << " steps, final LB "
            << num(res.lb_trace.back()) << ")\n";
  return kOk;
}

struct McmcOptions {
  std::string input;
  std::string types = "discrete";
  int p = 1;
  int burnin = 10000;
  int iterates = 20000;
  double scale = 0.1;
  std::string output;
};

int cmd_mcmc(const McmcOptions& o, const Common& c) {
  McmcConfig cfg;
  cfg.burnin = o.burnin;
  cfg.iterates = o.iterates;
  cfg.init_scale = o.scale;
  cfg.seed = c.seed;
  cfg.validate();
  const auto prep = prepare(o.input, o.types, false);
  const auto layout = ParameterLayout::all_free(prep.data.r, o.p);
  const auto chain = run_sampler(prep.boxes, layout, cfg);

  const std::string json_path = with_suffix(o.output, ".json", ".json");
  const std::string csv_path = with_suffix(o.output, ".json", "_draws.csv");
  std::ostringstream draws;
  chain.write_draws_csv(draws);
  write_text(csv_path, draws.str());
  json doc = chain.diagnostics();
  doc["library_version"] = kLibraryVersion;
  doc["draws_file"] = fs::path(csv_path).filename().string();
  doc["margins"] = margins_json(prep.margins);
  doc["data"] = {{"T", prep.data.T}, {"r", prep.data.r}, {"names", prep.data.names}};
  doc["config"]["command"] = "mcmc-fit";
  doc["config"]["input"] = o.input;
  doc["config"]["types"] = kinds_json(prep.kinds);
  doc["config"]["family"] = "gumbel_mix";
  doc["config"]["p"] = o.p;
  write_json(json_path, doc);
  std::cout << "chain written to " << csv_path << " and " << json_path << " (u acceptance "
            << num(chain.u_acceptance) << ")\n";
  if (chain.stuck) {
    std::cerr << "warning: the sampler became stuck (latent acceptance below " << num(cfg.stuck_rate) << " over "
              << cfg.stuck_window << " sweeps from sweep " << chain.stuck_sweep << ")\n";
    return kStuck;
  }
  return kOk;
}

struct PredictOptions {
  std::string fit;
  std::string data;
  int h = 1;
  std::size_t n = 1000;
  std::string output;
};

int cmd_predict(const PredictOptions& o, const Common& c) {
  const auto l = load_result(o.fit);
  const auto data = read_series_csv(o.data);
  check_kinds(data, l.kinds);
  const auto boxes = LatentBoxes::build(data, l.margins);
  if (o.n < 1) throw InvalidInput("--n must be at least 1");
  const auto pred = l.is_vb() ? predict(*l.vb, l.layout, boxes, l.margins, o.h, o.n, c.seed)
                              : predict(*l.chain, boxes, l.margins, o.h, o.n, c.seed);
  std::ostringstream out;
  pred.write_csv(out);
  write_text(o.output, out.str());
  std::cout << "predictions written to " << o.output << " (" << o.h << " x " << pred.r << " x " << o.n << ")\n";
  return kOk;
}

struct SpearmanOptions {
  std::string fit;
  std::size_t n_sim = 100000;
  std::size_t draws = 200;
  std::string output;
};

int cmd_spearman(const SpearmanOptions& o, const Common& c) {
  if (!fs::exists(o.fit)) throw InvalidInput("fit file '" + o.fit + "' does not exist");
  const auto l = load_result(o.fit);
  const auto psi = l.is_vb() ? psi_draws_vb(*l.vb, o.draws, c.seed) : psi_draws_chain(*l.chain, o.draws);
  const auto rep = spearman_report(l.layout, l.margins, psi, o.n_sim, c.seed);
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(with_suffix(o.output, ".csv", ".csv"), csv.str());
  json doc = rep.to_json();
  doc["library_version"] = kLibraryVersion;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = "vbda-spearman";
  doc["config"] = {{"fit", o.fit}, {"n_sim", o.n_sim}, {"n_param_draws", o.draws}, {"seed", c.seed}};
  write_json(with_suffix(o.output, ".csv", ".json"), doc);
  if (rep.large_support) std::cerr << "warning: a discrete margin has more than 10^4 support cells\n";
  std::cout << "Spearman report written to " << with_suffix(o.output, ".csv", ".csv") << "\n";
  return kOk;
}

struct DgpOptions {
  std::string kind = "autologistic";
  int T = 200;
  int p = 1;
  double tau = 0.5;
  double mean = 3.0;
  std::string spec;
  std::string output;
};

int cmd_simulate(const DgpOptions& o, const Common& c) {
  if (o.T < 1) throw InvalidInput("--T must be at least 1");
  SeriesData data;
  data.T = o.T;
  if (o.kind == "autologistic") {
    data.r = 1;
    data.values = simulate_autologistic(o.T, c.seed);
  } else if (o.kind == "dvine") {
    DvineSpec spec(1, o.p);
    if (!o.spec.empty()) {
      spec = DvineSpec::from_json(read_json(o.spec));
    } else {
      spec.at(1, 0, 0) = MixtureParam::gumbel(o.tau);
    }
    spec.validate();
    data.r = spec.r();
    data.values = simulate_dvine_counts(spec, o.T, o.mean, c.seed);
  } else {
    throw InvalidInput("unknown DGP kind '" + o.kind + "' (expected autologistic or dvine)");
  }
  for (int l = 0; l < data.r; ++l) data.names.push_back(data.r == 1 ? "y" : "y" + std::to_string(l + 1));
  std::ostringstream out;
  write_series_csv(out, data);
  write_text(o.output, out.str());
  std::cout << "series written to " << o.output << "\n";
  return kOk;
}

struct PlotOptions {
  std::vector<std::string> fits;
  std::string output_dir;
  std::size_t draws = 10000;
  int grid = 30;
};

int cmd_plotdata(const PlotOptions& o, const Common& c) {
  std::vector<Loaded> loaded;
  for (const auto& f : o.fits) loaded.push_back(load_result(f));
  const fs::path dir(o.output_dir);

  std::string trace = "fit,step,lb\n";
  std::string by_k = "fit,VA,K,steps,lb_final,lb_final_se\n";
  for (const auto& l : loaded) {
    if (!l.is_vb()) continue;
    const auto& lb = l.vb->lb_trace;
    for (std::size_t k = 0; k < lb.size(); ++k) trace += l.label() + "," + std::to_string(k + 1) + "," + num(lb[k]) + "\n";
    const std::size_t tail = std::max<std::size_t>(1, lb.size() / 10);
    const std::span<const double> last(lb.data() + lb.size() - tail, tail);
    const double m = compensated_mean(last);
    double ss = 0.0;
    for (double x : last) ss += (x - m) * (x - m);
    const double se = tail > 1 ? std::sqrt(ss / static_cast<double>(tail - 1) / static_cast<double>(tail)) : 0.0;
    by_k += l.label() + "," + std::to_string(static_cast<int>(l.vb->config.variant)) + "," +
            std::to_string(l.vb->config.K) + "," + std::to_string(lb.size()) + "," + num(m) + "," + num(se) + "\n";
  }
  write_text((dir / "lb_trace.csv").string(), trace);
  write_text((dir / "lb_vs_k.csv").string(), by_k);

  std::string grid = "fit,k,l2,l1,u,v,logc\n";
  for (const auto& l : loaded) {
    const auto spec = posterior_mean_spec(l, o.draws, c.seed);
    for (std::size_t b = 0; b < spec.size(); ++b) {
      const auto key = spec.key(b);
      const MixtureKernel kernel(spec[b]);
      for (int i = 0; i < o.grid; ++i) {
        for (int j = 0; j < o.grid; ++j) {
          const double u = (i + 0.5) / o.grid, v = (j + 0.5) / o.grid;
          grid += l.label() + "," + std::to_string(key.k) + "," + std::to_string(key.l2 + 1) + "," +
                  std::to_string(key.l1 + 1) + "," + num(u) + "," + num(v) + "," + num(kernel.logpdf(u, v)) + "\n";
        }
      }
    }
  }
  write_text((dir / "density_grid.csv").string(), grid);

  const Loaded* vb = nullptr;
  const Loaded* mc = nullptr;
  for (const auto& l : loaded) {
    if (l.is_vb() && !vb) vb = &l;
    if (!l.is_vb() && !mc) mc = &l;
  }
  if (vb && mc) {
    if (vb->layout.to_json() != mc->layout.to_json()) throw InvalidInput("VB and MCMC results use different models");
    const auto a = posterior_summaries(vb->layout, *vb->vb, o.draws, c.seed);
    const auto b = posterior_summaries(*mc->chain);
    std::string scatter = "name,vb_mean,vb_sd,mcmc_mean,mcmc_sd,vb_psi_mean,vb_psi_sd,mcmc_psi_mean,mcmc_psi_sd\n";
    for (std::size_t f = 0; f < a.size(); ++f) {
      scatter += a[f].name + "," + num(a[f].mean) + "," + num(a[f].sd) + "," + num(b[f].mean) + "," + num(b[f].sd) + "," +
                 num(a[f].psi_mean) + "," + num(a[f].psi_sd) + "," + num(b[f].psi_mean) + "," + num(b[f].psi_sd) + "\n";
    }
    write_text((dir / "vb_vs_mcmc.csv").string(), scatter);
  }
  std::cout << "plot data written to " << o.output_dir << "\n";
  return kOk;
}

struct SummaryOptions {
  std::string fit;
  std::size_t draws = 10000;
  std::string output;
};

int cmd_summary(const SummaryOptions& o, const Common& c) {
  const auto l = load_result(o.fit);
  const auto sums = l.is_vb() ? posterior_summaries(l.layout, *l.vb, o.draws, c.seed) : posterior_summaries(*l.chain);
  const auto csv = summaries_csv(sums);
  if (o.output.empty()) {
    std::cout << csv;
  } else {
    write_text(o.output, csv);
  }
  if (l.is_vb()) {
    const auto& lb = l.vb->lb_trace;
    std::cerr << "VB fit: VA" << static_cast<int>(l.vb->config.variant) << ", K=" << l.vb->config.K << ", "
              << lb.size() << " steps, final LB " << num(lb.back()) << "\n";
  } else {
    std::cerr << "MCMC: " << l.chain->psi_draws.size() << " retained sweeps, u acceptance "
              << num(l.doc.at("u_acceptance").get<double>()) << (l.chain->stuck ? ", STUCK" : "") << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Bayes data augmentation for D-vine copula time series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  Common common;
  common.threads = threads_from_env(0);
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", common.threads, "Worker threads (default: VBDA_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", common.seed, "Random seed");
  };

  FitOptions fo;
  auto add_fit = [&](CLI::App* sub, bool multi) {
    sub->add_option("--input", fo.input, "CSV data file")->required()->check(CLI::ExistingFile);
    sub->add_option("--types", fo.types,
                    multi ? "Comma-separated discrete|continuous per column" : "discrete or continuous");
    sub->add_option("--family", fo.family, "Pair-copula family (gumbel_mix)");
    sub->add_option("--p", fo.p, "Markov order")->check(CLI::PositiveNumber);
    sub->add_option("--K", fo.K, "Factors in the parameter approximation")->check(CLI::NonNegativeNumber);
    sub->add_option("--S", fo.S, "Samples per gradient step");
    sub->add_option("--steps", fo.steps, "Gradient steps");
    sub->add_option("--va", fo.va, "Latent approximation (1, 2 or 3)")->check(CLI::Range(1, 3));
    sub->add_option("--output", fo.output, "Fit JSON")->required();
    sub->add_option("--lb-trace", fo.lb_trace, "Lower-bound trace CSV (default: <output>_lb_trace.csv)");
    sub->add_option("--checkpoint", fo.checkpoint, "Checkpoint file written every 500 steps");
    sub->add_flag("--resume", fo.resume, "Continue from --checkpoint when it exists");
    sub->add_option("--summary-draws", fo.summary_draws, "Draws for gamma_mean and gamma_sd");
    add_common(sub);
  };
  auto* fit_uni = app.add_subcommand("fit-uni", "Fit a univariate series by VBDA");
  add_fit(fit_uni, false);
  auto* fit_multi = app.add_subcommand("fit-multi", "Fit a multivariate series by VBDA");
  add_fit(fit_multi, true);

  McmcOptions mo;
  auto* mcmc = app.add_subcommand("mcmc-fit", "Fit by MCMC data augmentation");
  mcmc->add_option("--input", mo.input, "CSV data file")->required()->check(CLI::ExistingFile);
  mcmc->add_option("--types", mo.types, "Comma-separated discrete|continuous per column");
  mcmc->add_option("--p", mo.p, "Markov order")->check(CLI::PositiveNumber);
  mcmc->add_option("--burnin", mo.burnin, "Burn-in sweeps");
  mcmc->add_option("--iterates", mo.iterates, "Retained sweeps");
  mcmc->add_option("--rw-scale", mo.scale, "Initial random-walk scale");
  mcmc->add_option("--output", mo.output, "Diagnostics JSON; draws go to <output>_draws.csv")->required();
  add_common(mcmc);

  PredictOptions po;
  auto* pred = app.add_subcommand("predict", "Simulate from the predictive distribution");
  pred->add_option("--fit", po.fit, "Fit or MCMC JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("--data", po.data, "Data the fit was estimated on")->required()->check(CLI::ExistingFile);
  pred->add_option("--horizon", po.h, "Forecast horizon h")->check(CLI::PositiveNumber);
  pred->add_option("--n", po.n, "Draws");
  pred->add_option("--output", po.output, "Predictions CSV")->required();
  add_common(pred);

  SpearmanOptions so;
  auto* spear = app.add_subcommand("spearman", "Posterior Spearman correlations");
  spear->add_option("--fit", so.fit, "Fit or MCMC JSON")->required();
  spear->add_option("--n-sim", so.n_sim, "Simulated paths per parameter draw");
  spear->add_option("--draws", so.draws, "Parameter draws");
  spear->add_option("--output", so.output, "Report CSV (JSON alongside)")->required();
  add_common(spear);

  DgpOptions dgo;
  auto* sim = app.add_subcommand("simulate-dgp", "Simulate a synthetic series");
  sim->add_option("--kind", dgo.kind, "autologistic or dvine");
  sim->add_option("--T", dgo.T, "Length");
  sim->add_option("--p", dgo.p, "Markov order (dvine)")->check(CLI::PositiveNumber);
  sim->add_option("--tau", dgo.tau, "Lag-1 Gumbel Kendall tau (dvine)");
  sim->add_option("--mean", dgo.mean, "Poisson margin mean (dvine)");
  sim->add_option("--spec", dgo.spec, "D-vine spec JSON (dvine; overrides --p and --tau)")->check(CLI::ExistingFile);
  sim->add_option("--output", dgo.output, "Series CSV")->required();
  add_common(sim);

  PlotOptions plo;
  auto* plot = app.add_subcommand("plotdata", "Tidy CSVs for plotting");
  plot->add_option("--fit", plo.fits, "Fit or MCMC JSON (repeatable)")->required()->check(CLI::ExistingFile);
  plot->add_option("--output-dir", plo.output_dir, "Directory for the CSVs")->required();
  plot->add_option("--draws", plo.draws, "Draws for VB posterior means");
  plot->add_option("--grid", plo.grid, "Grid points per axis")->check(CLI::PositiveNumber);
  add_common(plot);

  SummaryOptions sumo;
  auto* summary = app.add_subcommand("summary", "Posterior parameter summaries");
  summary->add_option("--fit", sumo.fit, "Fit or MCMC JSON")->required()->check(CLI::ExistingFile);
  summary->add_option("--draws", sumo.draws, "Draws for VB summaries");
  summary->add_option("--output", sumo.output, "CSV file (default: stdout)");
  add_common(summary);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    set_threads(common.threads);
    if (*fit_uni) return cmd_fit(fo, common, true);
    if (*fit_multi) return cmd_fit(fo, common, false);
    if (*mcmc) return cmd_mcmc(mo, common);
    if (*pred) return cmd_predict(po, common);
    if (*spear) return cmd_spearman(so, common);
    if (*sim) return cmd_simulate(dgo, common);
    if (*plot) return cmd_plotdata(plo, common);
    if (*summary) return cmd_summary(sumo, common);
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
  return kOk;
}
