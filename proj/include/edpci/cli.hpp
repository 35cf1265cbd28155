#pragma once

#include <chrono>
#include <functional>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "data.hpp"
#include "diagnostics.hpp"
#include "effects.hpp"
#include "error.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "sampler.hpp"
#include "simulation.hpp"

// Subcommands: fit, effects, diagnose, simulate, generate. Each has its own
// option set and accepts an INI-style --config file (key = value, CLI flags
// override file values). The effective configuration is echoed next to the
// outputs and can be fed back with --config to repeat the run.
//
// Exit codes: 0 success, 1 usage / configuration / input error, 2 runtime or
// numerical failure.

namespace edpci::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct SchemaOptions {
  std::string outcome = "Y";
  std::string outcome_kind = "binary";
  std::string treatment = "A";
  int treatment_levels = 2;
  std::vector<std::string> binary;
  std::vector<std::string> continuous;

  VariableSchema make() const {
    // An empty list echoes to the config as "", which reads back as one blank name.
    auto names = [](std::vector<std::string> v) {
      v.erase(std::remove(v.begin(), v.end(), std::string{}), v.end());
      return v;
    };
    return VariableSchema::make(parse_variable_kind(outcome_kind), treatment_levels, names(binary), names(continuous),
                                outcome, treatment);
  }
};

inline void add_schema_options(CLI::App& app, SchemaOptions& s) {
  app.add_option("--outcome", s.outcome, "outcome column")->capture_default_str();
  app.add_option("--outcome-kind", s.outcome_kind, "binary or continuous")
      ->check(CLI::IsMember({"binary", "continuous"}))
      ->capture_default_str();
  app.add_option("--treatment", s.treatment, "treatment column")->capture_default_str();
  app.add_option("--treatment-levels", s.treatment_levels, "number of treatment levels q")->capture_default_str();
  app.add_option("--binary", s.binary, "binary covariate columns")->delimiter(',');
  app.add_option("--continuous", s.continuous, "continuous covariate columns")->delimiter(',');
}

struct SamplerOptions {
  SamplerConfig cfg;
  double alpha_theta = -1.0;  // < 0: drawn from the prior
  double alpha_omega = -1.0;
  bool fixed_alpha = false;
  bool no_adapt = false;
  bool no_impute = false;
  PriorSpec prior;  // beta_mean is filled from the pooled fit

  SamplerConfig resolve() const {
    SamplerConfig c = cfg;
    c.adapt = !no_adapt;
    c.impute = !no_impute;
    c.update_alpha = !fixed_alpha;
    if (alpha_theta >= 0.0) c.initial_alpha_theta = alpha_theta;
    if (alpha_omega >= 0.0) c.initial_alpha_omega = alpha_omega;
    c.validate();
    return c;
  }
};

inline void add_sampler_options(CLI::App& app, SamplerOptions& s) {
  auto& c = s.cfg;
  app.add_option("--iterations", c.iterations, "total sweeps per chain")->capture_default_str();
  app.add_option("--burn-in", c.burn_in, "discarded sweeps")->capture_default_str();
  app.add_option("--thin", c.thin, "keep every thin-th sweep after burn-in")->capture_default_str();
  app.add_option("--aux", c.aux, "auxiliary clusters per urn level (m)")->capture_default_str();
  app.add_option("--chains", c.chains, "independent chains")->capture_default_str();
  app.add_option("--seed", c.seed, "top-level seed")->capture_default_str();
  app.add_option("--prior-predictive-draws", c.prior_predictive_draws, "M0")->capture_default_str();
  app.add_option("--beta-proposal-scale", c.beta_proposal_scale)->capture_default_str();
  app.add_option("--beta-inner-iterations", c.beta_inner_iterations)->capture_default_str();
  app.add_option("--alpha-omega-step", c.alpha_omega_step, "log-scale RW sd")->capture_default_str();
  app.add_option("--reference-ridge", c.reference_ridge, "ridge for the pooled prior-mean fit")
      ->capture_default_str();
  app.add_option("--alpha-theta", s.alpha_theta, "initial alpha_theta (< 0: prior draw)")->capture_default_str();
  app.add_option("--alpha-omega", s.alpha_omega, "initial alpha_omega (< 0: prior draw)")->capture_default_str();
  app.add_flag("--fixed-alpha", s.fixed_alpha, "keep concentrations at their initial values");
  app.add_flag("--no-adapt", s.no_adapt, "no proposal adaptation during burn-in");
  app.add_flag("--no-impute", s.no_impute, "keep initial fills for missing covariates");
  auto& p = s.prior;
  app.add_option("--beta-var", p.beta_var)->capture_default_str();
  app.add_option("--binary-a", p.binary_a)->capture_default_str();
  app.add_option("--binary-b", p.binary_b)->capture_default_str();
  app.add_option("--treatment-conc", p.treatment_conc)->capture_default_str();
  app.add_option("--cont-nu", p.cont_nu)->capture_default_str();
  app.add_option("--cont-scale2", p.cont_scale2)->capture_default_str();
  app.add_option("--cont-c", p.cont_c)->capture_default_str();
  app.add_option("--cont-mu", p.cont_mu)->capture_default_str();
  app.add_option("--outcome-nu", p.outcome_nu)->capture_default_str();
  app.add_option("--outcome-scale2", p.outcome_scale2)->capture_default_str();
  app.add_option("--alpha-shape", p.alpha_shape)->capture_default_str();
  app.add_option("--alpha-rate", p.alpha_rate)->capture_default_str();
}

struct QueryOptions {
  std::vector<std::string> estimands;
  std::vector<std::string> conditions;  // name=value
  int treatment = 1;
  int reference = 0;
  int att_group = 1;
  double quantile = 0.5;
  double threshold = 0.0;
  int population_draws = 1000;
  int stride = 100;
  std::uint64_t seed = 1;
  std::string prior_predictive = "exact";

  std::vector<EffectQuery> queries(const VariableSchema& schema) const {
    std::vector<std::pair<std::string, double>> cond;
    for (const auto& c : conditions) {
      const auto eq = c.find('=');
      double v = 0.0;
      if (eq == std::string::npos || !detail::parse_double(detail::trim(std::string_view(c).substr(eq + 1)), v))
        throw ValidationError("condition '" + c + "' is not of the form name=value");
      cond.emplace_back(std::string(detail::trim(std::string_view(c).substr(0, eq))), v);
    }
    std::vector<EffectQuery> out;
    for (const auto& e : estimands) {
      EffectQuery q;
      q.functional = parse_functional(e);
      q.id = e;
      q.treatment = treatment;
      q.reference = reference;
      q.att_group = att_group;
      q.quantile = quantile;
      q.threshold = threshold;
      q.population_draws = population_draws;
      if (q.functional == Functional::conditional_difference) q.conditioning = cond;
      q.validate(schema);
      out.push_back(q);
    }
    return out;
  }

  PriorPredictiveMode mode() const {
    return prior_predictive == "monte-carlo" ? PriorPredictiveMode::monte_carlo : PriorPredictiveMode::exact;
  }
};

inline void add_query_options(CLI::App& app, QueryOptions& q) {
  app.add_option("--estimand", q.estimands,
                 "mean_difference, relative_risk, risk_difference, att_difference, "
                 "conditional_difference, quantile_difference or cdf_value (repeatable)")
      ->delimiter(',');
  app.add_option("--condition", q.conditions, "name=value for conditional_difference (repeatable)")->delimiter(',');
  app.add_option("--treatment-arm", q.treatment, "treatment level a")->capture_default_str();
  app.add_option("--reference-arm", q.reference, "reference level a'")->capture_default_str();
  app.add_option("--att-group", q.att_group, "conditioning arm for att_difference")->capture_default_str();
  app.add_option("--quantile", q.quantile, "level for quantile_difference")->capture_default_str();
  app.add_option("--threshold", q.threshold, "y for cdf_value (original scale)")->capture_default_str();
  app.add_option("--population-draws", q.population_draws, "M covariate draws per state")->capture_default_str();
  app.add_option("--stride", q.stride, "use every stride-th retained state per chain")->capture_default_str();
  app.add_option("--effect-seed", q.seed, "seed for the g-computation streams")->capture_default_str();
  app.add_option("--prior-predictive", q.prior_predictive, "new-cluster terms: exact or monte-carlo")
      ->check(CLI::IsMember({"exact", "monte-carlo"}))
      ->capture_default_str();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << text;
}

inline void echo_config(const CLI::App& app, const std::string& dir, const std::string& name = "effective_config.ini") {
  write_text(fs::path(dir) / name, app.config_to_str(true, false));
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data;
  std::string out = "edpci_out";
  int workers = 0;
  SchemaOptions schema;
  SamplerOptions sampler;
};

/// Chains run in parallel; each streams its retained states into its own
/// buffer, concatenated in chain order so the file does not depend on
/// scheduling.
inline int cmd_fit(const FitArgs& a, const CLI::App& app, std::ostream& out) {
  if (a.data.empty()) throw ValidationError("fit: --data is required");
  const VariableSchema schema = a.schema.make();
  const SamplerConfig cfg = a.sampler.resolve();
  const Dataset raw = load_dataset(a.data, schema);
  ensure_dir(a.out);
  echo_config(app, a.out);

  const auto t0 = std::chrono::steady_clock::now();
  auto [std_data, scaling] = standardize_continuous(raw);
  PosteriorDraws head;
  head.schema = raw.schema;
  head.scaling = scaling;
  head.config = cfg;
  head.n = raw.n();
  head.prior = empirical_prior(std_data, a.sampler.prior, cfg.reference_ridge);
  const ModelData data = ModelData::from(std_data);
  head.missing_cells = data.missing_cells;
  head.chains.resize(cfg.chains);
  std::vector<std::string> buffers(cfg.chains);
  std::vector<std::vector<double>> k_trace(cfg.chains);
  parallel_for(cfg.chains, resolve_workers(a.workers), [&](int c) {
    std::ostringstream os;
    DrawsWriter w(os);
    run_chain(data, cfg, head.prior, Rng::derive(cfg.seed, {static_cast<std::uint64_t>(c), 0x5eedu}), c,
              &head.chains[c], [&](RetainedState&& s) {
                k_trace[c].push_back(s.clusters.k());
                w.state(s);
              });
    buffers[c] = os.str();
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    std::ofstream os(fs::path(a.out) / "draws.jsonl");
    if (!os) throw Error("cannot write draws file in '" + a.out + "'");
    DrawsWriter(os).header(head);
    for (const auto& b : buffers) os << b;
  }
  json report = {{"data", a.data},
                 {"n", raw.n()},
                 {"missing_cells", static_cast<int>(head.missing_cells.size())},
                 {"iterations", cfg.iterations},
                 {"burn_in", cfg.burn_in},
                 {"thin", cfg.thin},
                 {"retained_per_chain", cfg.retained()},
                 {"wall_seconds", seconds}};
  report["chains"] = json::array();
  for (int c = 0; c < cfg.chains; ++c) {
    json r = to_json(head.chains[c]);
    r["wall_seconds"] = head.chains[c].seconds;
    r["mean_k"] = k_trace[c].empty() ? 0.0 : mean(k_trace[c]);
    report["chains"].push_back(r);
  }
  write_text(fs::path(a.out) / "fit_report.json", report.dump(2) + "\n");
  out << fmt::format("fit: n = {}, {} chain(s) x {} retained, {:.1f} s\n", raw.n(), cfg.chains, cfg.retained(),
                     seconds);
  for (int c = 0; c < cfg.chains; ++c)
    out << fmt::format("  chain {}: beta acceptance {:.3f}, alpha_omega acceptance {:.3f}, mean k {:.2f}\n", c,
                       head.chains[c].beta_acceptance, head.chains[c].alpha_omega_acceptance,
                       report["chains"][c]["mean_k"].get<double>());
  out << "draws: " << (fs::path(a.out) / "draws.jsonl").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// effects

struct EffectsArgs {
  std::string draws;
  std::string out = "edpci_out";
  int workers = 0;
  QueryOptions query;
};

inline std::string draws_path(const std::string& draws, const std::string& out) {
  return draws.empty() ? (fs::path(out) / "draws.jsonl").string() : draws;
}

inline int cmd_effects(const EffectsArgs& a, const CLI::App& app, std::ostream& out) {
  if (a.query.estimands.empty()) throw ValidationError("no estimand requested (use --estimand)");
  const PosteriorDraws post = read_draws(draws_path(a.draws, a.out));
  const auto queries = a.query.queries(post.schema);
  ensure_dir(a.out);
  echo_config(app, a.out, "effects_config.ini");
  std::vector<EffectEstimate> summaries;
  json all = json::array();
  for (std::size_t t = 0; t < queries.size(); ++t) {
    EffectOptions opt;
    opt.stride = a.query.stride;
    opt.seed = a.query.seed;
    opt.query_index = static_cast<int>(t);
    opt.workers = resolve_workers(a.workers);
    opt.mode = a.query.mode();
    const EffectResult r = compute_effect(post, queries[t], opt);
    std::ofstream os(fs::path(a.out) / ("effect_draws_" + queries[t].id + ".csv"));
    if (!os) throw Error("cannot write effect draws in '" + a.out + "'");
    write_effect_draws_csv(os, r);
    summaries.push_back(r.estimate);
    all.push_back(to_json(r.estimate));
    out << fmt::format("{:<24} median {:>10.5g}   95% CI ({:.5g}, {:.5g})   [{} draws, {} excluded]\n",
                       queries[t].id, r.estimate.median, r.estimate.lower, r.estimate.upper,
                       r.estimate.iterations_used, r.estimate.excluded);
  }
  write_text(fs::path(a.out) / "effects.json", all.dump(2) + "\n");
  std::ostringstream csv;
  write_effect_summary_csv(csv, summaries);
  write_text(fs::path(a.out) / "effects.csv", csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  std::string draws;
  std::string out = "edpci_out";
  int workers = 0;
  QueryOptions query;
};

/// Effect-scale traces, one per chain, for Gelman-Rubin / ESS.
inline std::vector<NamedTrace> effect_traces(const PosteriorDraws& post, const std::vector<EffectQuery>& queries,
                                             const QueryOptions& qo, int workers) {
  std::vector<NamedTrace> traces;
  for (std::size_t t = 0; t < queries.size(); ++t) {
    EffectOptions opt;
    opt.stride = qo.stride;
    opt.seed = qo.seed;
    opt.query_index = static_cast<int>(t);
    opt.workers = workers;
    opt.mode = qo.mode();
    const auto r = compute_effect(post, queries[t], opt);
    NamedTrace tr{"psi_" + queries[t].id, std::vector<std::vector<double>>(std::max(1, post.num_chains()))};
    for (const auto& d : r.draws)
      if (d.valid && std::isfinite(d.value)) tr.chains[d.chain].push_back(d.value);
    traces.push_back(std::move(tr));
  }
  return traces;
}

inline int cmd_diagnose(const DiagnoseArgs& a, const CLI::App& app, std::ostream& out) {
  const PosteriorDraws post = read_draws(draws_path(a.draws, a.out));
  if (post.num_chains() < 2)
    throw ValidationError("diagnose needs at least 2 chains to compare (Gelman-Rubin); this draws file has " +
                          std::to_string(post.num_chains()) + ". Refit with --chains 2 or more.");
  const auto queries = a.query.queries(post.schema);
  ensure_dir(a.out);
  echo_config(app, a.out, "diagnose_config.ini");
  auto extra = effect_traces(post, queries, a.query, resolve_workers(a.workers));
  const DiagnosticsReport r = diagnose(post, extra);
  write_text(fs::path(a.out) / "diagnostics.json", to_json(r).dump(2) + "\n");
  const std::string text = to_text(r);
  write_text(fs::path(a.out) / "diagnostics.txt", text);
  std::vector<NamedTrace> all = extra;
  for (auto& t : hyper_traces(post)) all.push_back(std::move(t));
  std::ofstream os(fs::path(a.out) / "traces.csv");
  if (!os) throw Error("cannot write traces in '" + a.out + "'");
  write_trace_csv(os, all);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  int scenario = 1;
  int n = 250;
  int replicates = 2;
  std::uint64_t seed = 1;
  bool missing = false;
  std::vector<std::string> estimators = {"edp", "iptw", "parametric_bayes"};
  std::vector<std::string> estimands;  // default by outcome type
  int stride = 10;
  int population_draws = 1000;
  int bootstrap = 200;
  int bayes_iterations = 3000;
  int bayes_burn_in = 1000;
  std::string out = "edpci_out";
  int workers = 0;
  SamplerOptions sampler;
};

inline int cmd_simulate(const SimulateArgs& a, const CLI::App& app, std::ostream& out) {
  ScenarioSpec spec{a.scenario, a.n, a.seed, a.missing};
  spec.validate();
  if (a.replicates < 2) throw ValidationError("replicates (R) must be >= 2");
  std::vector<Estimand> estimands;
  for (const auto& e : a.estimands) estimands.push_back(parse_estimand(e));
  if (estimands.empty()) {
    if (scenario_schema(a.scenario).outcome_kind == VariableKind::binary)
      estimands = {Estimand::relative_risk, Estimand::risk_difference};
    else
      estimands = {Estimand::mean_difference};
  }
  const SamplerConfig sc = a.sampler.resolve();
  std::vector<Estimator> est;
  for (const auto& name : a.estimators) {
    if (name == "edp") {
      EdpEstimatorConfig ec{sc, a.stride, a.population_draws};
      ec.sampler.chains = 1;
      est.push_back({name, [ec, estimands](const Dataset& d, Rng& rng) { return edp_estimate(d, estimands, rng, ec); }});
    } else if (name == "iptw") {
      const int b = a.bootstrap;
      est.push_back({name, [b, estimands](const Dataset& d, Rng& rng) {
                       return iptw_estimate(d, estimands, rng, b).estimates;
                     }});
    } else if (name == "parametric_bayes") {
      const ParametricBayesConfig pc{a.bayes_iterations, a.bayes_burn_in, sc.reference_ridge};
      est.push_back({name, [pc, estimands](const Dataset& d, Rng& rng) {
                       return parametric_bayes_estimate(d, estimands, rng, pc).estimates;
                     }});
    } else {
      throw ValidationError("unknown estimator '" + name + "' (expected edp, iptw or parametric_bayes)");
    }
  }
  ensure_dir(a.out);
  echo_config(app, a.out, "simulate_config.ini");
  const auto m = evaluate_replicates(spec, est, estimands, a.replicates, resolve_workers(a.workers));
  {
    std::ofstream os(fs::path(a.out) / "benchmark.csv");
    if (!os) throw Error("cannot write benchmark table in '" + a.out + "'");
    write_benchmark_csv(os, m.rows);
  }
  {
    std::ofstream os(fs::path(a.out) / "replicates.csv");
    os << "replicate,estimator,estimand,point,lower,upper\n";
    for (const auto& r : m.records)
      os << r.replicate << ',' << r.estimator << ',' << to_string(r.estimand) << ',' << detail::format_double(r.point)
         << ',' << detail::format_double(r.lower) << ',' << detail::format_double(r.upper) << '\n';
  }
  std::string fails;
  for (const auto& f : m.failures) fails += f + "\n";
  write_text(fs::path(a.out) / "failures.txt", fails);

  out << fmt::format("scenario {} (n = {}, R = {}{})\n", a.scenario, a.n, a.replicates, a.missing ? ", missing" : "");
  out << fmt::format("{:<18} {:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>5}\n", "estimator", "estimand", "truth", "bias",
                     "coverage", "ESD", "CI width", "fail");
  for (const auto& r : m.rows)
    out << fmt::format("{:<18} {:<16} {:>9.4f} {:>9.4f} {:>9.3f} {:>9.4f} {:>9.4f} {:>5}\n", r.estimator,
                       to_string(r.estimand), r.truth, r.bias, r.coverage, r.esd, r.ci_width, r.failures);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string scenario = "1";  // 1-4 or cohort
  int n = 250;
  std::uint64_t seed = 1;
  bool missing = false;
  std::string file;
};

/// Writes a dataset CSV plus an INI snippet with the matching schema flags.
inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.file.empty()) throw ValidationError("generate: --file is required");
  Rng rng = Rng::derive(a.seed, {0x9e4u});
  Dataset d;
  if (a.scenario == "cohort") {
    if (a.n < 50) throw ValidationError("cohort n must be >= 50");
    d = generate_cohort(a.n, rng);
  } else {
    int s = 0;
    try {
      s = std::stoi(a.scenario);
    } catch (const std::exception&) {
      throw ValidationError("scenario must be 1, 2, 3, 4 or cohort (got '" + a.scenario + "')");
    }
    d = generate_scenario(ScenarioSpec{s, a.n, a.seed, a.missing}, rng).first;
  }
  const fs::path path(a.file);
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  save_dataset(a.file, d);
  std::string ini = "outcome = " + d.schema.outcome_name + "\noutcome-kind = " + to_string(d.schema.outcome_kind) +
                    "\ntreatment = " + d.schema.treatment_name +
                    "\ntreatment-levels = " + std::to_string(d.schema.treatment_levels) + "\n";
  std::string bin, cont;
  for (const auto& c : d.schema.covariates) (c.kind == VariableKind::binary ? bin : cont) += (c.name + ",");
  if (!bin.empty()) ini += "binary = " + bin.substr(0, bin.size() - 1) + "\n";
  if (!cont.empty()) ini += "continuous = " + cont.substr(0, cont.size() - 1) + "\n";
  write_text(a.file + ".schema.ini", ini);
  out << fmt::format("wrote {} rows to {} (schema flags in {}.schema.ini)\n", d.n(), a.file, a.file);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatcher

inline std::string usage() {
  return "usage: edpci <command> [options]\n\n"
         "commands:\n"
         "  fit        run the sampler on a CSV and write posterior draws\n"
         "  effects    causal effects from a draws file\n"
         "  diagnose   Gelman-Rubin, ESS and cluster occupancy for a multi-chain draws file\n"
         "  simulate   benchmark estimators on a simulation scenario\n"
         "  generate   write a simulated dataset (scenario 1-4 or cohort) as CSV\n\n"
         "Every command accepts --config FILE (key = value lines, flags override) and --help.\n";
}

inline void add_common(CLI::App& app, std::string& out_dir, int& workers) {
  app.set_config("--config", "", "INI-style configuration file");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--workers", workers, "worker threads (0: EDPCI_WORKERS or all cores)")->capture_default_str();
}

/// Parses and runs one command. Never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (argc < 2) {
    err << usage();
    return kExitUsage;
  }
  const std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    out << usage();
    return kExitOk;
  }
  CLI::App app("edpci " + cmd);
  app.name("edpci " + cmd);
  FitArgs fit;
  EffectsArgs eff;
  DiagnoseArgs dia;
  SimulateArgs sim;
  GenerateArgs gen;
  std::function<int()> action;
  if (cmd == "fit") {
    add_common(app, fit.out, fit.workers);
    app.add_option("--data", fit.data, "input CSV")->capture_default_str();
    add_schema_options(app, fit.schema);
    add_sampler_options(app, fit.sampler);
    action = [&] { return cmd_fit(fit, app, out); };
  } else if (cmd == "effects") {
    add_common(app, eff.out, eff.workers);
    app.add_option("--draws", eff.draws, "draws file (default OUT/draws.jsonl)")->capture_default_str();
    add_query_options(app, eff.query);
    action = [&] { return cmd_effects(eff, app, out); };
  } else if (cmd == "diagnose") {
    add_common(app, dia.out, dia.workers);
    app.add_option("--draws", dia.draws, "draws file (default OUT/draws.jsonl)")->capture_default_str();
    add_query_options(app, dia.query);
    action = [&] { return cmd_diagnose(dia, app, out); };
  } else if (cmd == "simulate") {
    add_common(app, sim.out, sim.workers);
    app.add_option("--scenario", sim.scenario, "1, 2, 3 or 4")->capture_default_str();
    app.add_option("--n", sim.n, "rows per replicate")->capture_default_str();
    app.add_option("--replicates", sim.replicates, "R")->capture_default_str();
    app.add_option("--sim-seed", sim.seed, "seed for data and estimator streams")->capture_default_str();
    app.add_flag("--missing", sim.missing, "apply the scenario's missingness mechanism");
    app.add_option("--estimators", sim.estimators, "edp, iptw, parametric_bayes")->delimiter(',')->capture_default_str();
    app.add_option("--estimand", sim.estimands, "relative_risk, risk_difference, mean_difference")->delimiter(',');
    app.add_option("--stride", sim.stride, "EDP: effect every stride-th retained state")->capture_default_str();
    app.add_option("--population-draws", sim.population_draws, "EDP: M")->capture_default_str();
    app.add_option("--bootstrap", sim.bootstrap, "IPTW bootstrap resamples")->capture_default_str();
    app.add_option("--bayes-iterations", sim.bayes_iterations)->capture_default_str();
    app.add_option("--bayes-burn-in", sim.bayes_burn_in)->capture_default_str();
    add_sampler_options(app, sim.sampler);
    action = [&] { return cmd_simulate(sim, app, out); };
  } else if (cmd == "generate") {
    app.set_config("--config", "", "INI-style configuration file");
    app.add_option("--scenario", gen.scenario, "1, 2, 3, 4 or cohort")->capture_default_str();
    app.add_option("--n", gen.n, "rows")->capture_default_str();
    app.add_option("--seed", gen.seed)->capture_default_str();
    app.add_flag("--missing", gen.missing, "apply the scenario's missingness mechanism");
    app.add_option("--file", gen.file, "output CSV")->capture_default_str();
    action = [&] { return cmd_generate(gen, out); };
  } else {
    err << "unknown command '" << cmd << "'\n\n" << usage();
    return kExitUsage;
  }
  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DegenerateColumnError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace edpci::cli
