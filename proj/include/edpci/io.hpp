#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "effects.hpp"
#include "error.hpp"
#include "sampler.hpp"

// Posterior draws as JSON lines: one header record (model context), then one
// record per retained state. Subject labels are not stored; a reloaded state
// gets labels laid out in cluster order, which every post-processing step
// (predictive weights, occupancy) is invariant to.

namespace edpci {

using json = nlohmann::json;

inline constexpr const char* kDrawsFormat = "edpci-draws";
inline constexpr int kDrawsVersion = 1;

namespace io_detail {

inline json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class T>
T field(const json& j, const char* key, int line) {
  if (!j.contains(key)) throw ParseError(std::string("draws record lacks '") + key + "'", line);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad '") + key + "' in draws record: " + e.what(), line);
  }
}

}  // namespace io_detail

inline json to_json(const VariableSchema& s) {
  json cov = json::array();
  for (const auto& c : s.covariates) cov.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  return {{"outcome", s.outcome_name},
          {"outcome_kind", to_string(s.outcome_kind)},
          {"treatment", s.treatment_name},
          {"treatment_levels", s.treatment_levels},
          {"covariates", cov}};
}

inline VariableSchema schema_from_json(const json& j) {
  VariableSchema s;
  s.outcome_name = j.at("outcome").get<std::string>();
  s.outcome_kind = parse_variable_kind(j.at("outcome_kind").get<std::string>());
  s.treatment_name = j.at("treatment").get<std::string>();
  s.treatment_levels = j.at("treatment_levels").get<int>();
  for (const auto& c : j.at("covariates"))
    s.covariates.push_back({c.at("name").get<std::string>(), parse_variable_kind(c.at("kind").get<std::string>())});
  s.validate();
  return s;
}

inline json to_json(const PriorSpec& p) {
  return {{"beta_mean", io_detail::vec(p.beta_mean)},
          {"beta_var", p.beta_var},
          {"binary_a", p.binary_a},
          {"binary_b", p.binary_b},
          {"treatment_conc", p.treatment_conc},
          {"cont_nu", p.cont_nu},
          {"cont_scale2", p.cont_scale2},
          {"cont_c", p.cont_c},
          {"cont_mu", p.cont_mu},
          {"outcome_nu", p.outcome_nu},
          {"outcome_scale2", p.outcome_scale2},
          {"alpha_shape", p.alpha_shape},
          {"alpha_rate", p.alpha_rate}};
}

inline PriorSpec prior_from_json(const json& j) {
  PriorSpec p;
  p.beta_mean = io_detail::to_vec(j.at("beta_mean"));
  p.beta_var = j.at("beta_var");
  p.binary_a = j.at("binary_a");
  p.binary_b = j.at("binary_b");
  p.treatment_conc = j.at("treatment_conc");
  p.cont_nu = j.at("cont_nu");
  p.cont_scale2 = j.at("cont_scale2");
  p.cont_c = j.at("cont_c");
  p.cont_mu = j.at("cont_mu");
  p.outcome_nu = j.at("outcome_nu");
  p.outcome_scale2 = j.at("outcome_scale2");
  p.alpha_shape = j.at("alpha_shape");
  p.alpha_rate = j.at("alpha_rate");
  return p;
}

inline json to_json(const ScalingParams& s) {
  return {{"center", s.center}, {"scale", s.scale}, {"outcome_center", s.outcome_center},
          {"outcome_scale", s.outcome_scale}};
}

inline ScalingParams scaling_from_json(const json& j) {
  ScalingParams s;
  s.center = j.at("center").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  s.outcome_center = j.at("outcome_center");
  s.outcome_scale = j.at("outcome_scale");
  return s;
}

inline json to_json(const SamplerConfig& c) {
  json j = {{"iterations", c.iterations},
            {"burn_in", c.burn_in},
            {"thin", c.thin},
            {"aux", c.aux},
            {"chains", c.chains},
            {"seed", c.seed},
            {"prior_predictive_draws", c.prior_predictive_draws},
            {"beta_proposal_scale", c.beta_proposal_scale},
            {"beta_inner_iterations", c.beta_inner_iterations},
            {"alpha_omega_step", c.alpha_omega_step},
            {"adapt", c.adapt},
            {"impute", c.impute},
            {"update_alpha", c.update_alpha},
            {"init_single_cluster", c.init_single_cluster},
            {"reference_ridge", c.reference_ridge}};
  j["initial_alpha_theta"] = c.initial_alpha_theta ? json(*c.initial_alpha_theta) : json();
  j["initial_alpha_omega"] = c.initial_alpha_omega ? json(*c.initial_alpha_omega) : json();
  return j;
}

inline SamplerConfig sampler_config_from_json(const json& j) {
  SamplerConfig c;
  c.iterations = j.at("iterations");
  c.burn_in = j.at("burn_in");
  c.thin = j.at("thin");
  c.aux = j.at("aux");
  c.chains = j.at("chains");
  c.seed = j.at("seed");
  c.prior_predictive_draws = j.at("prior_predictive_draws");
  c.beta_proposal_scale = j.at("beta_proposal_scale");
  c.beta_inner_iterations = j.at("beta_inner_iterations");
  c.alpha_omega_step = j.at("alpha_omega_step");
  c.adapt = j.at("adapt");
  c.impute = j.at("impute");
  c.update_alpha = j.at("update_alpha");
  c.init_single_cluster = j.at("init_single_cluster");
  c.reference_ridge = j.at("reference_ridge");
  if (!j.at("initial_alpha_theta").is_null()) c.initial_alpha_theta = j.at("initial_alpha_theta").get<double>();
  if (!j.at("initial_alpha_omega").is_null()) c.initial_alpha_omega = j.at("initial_alpha_omega").get<double>();
  return c;
}

/// Acceptance rates only; wall time belongs in the fit report.
inline json to_json(const ChainReport& r) {
  return {{"chain", r.chain},
          {"beta_acceptance", r.beta_acceptance},
          {"beta_proposal_scale", r.beta_proposal_scale},
          {"alpha_omega_acceptance", r.alpha_omega_acceptance},
          {"impute_acceptance", r.impute_acceptance}};
}

inline ChainReport chain_report_from_json(const json& j) {
  ChainReport r;
  r.chain = j.at("chain");
  r.beta_acceptance = j.at("beta_acceptance");
  r.beta_proposal_scale = j.at("beta_proposal_scale");
  r.alpha_omega_acceptance = j.at("alpha_omega_acceptance");
  r.impute_acceptance = j.at("impute_acceptance");
  return r;
}

inline json draws_header(const PosteriorDraws& d) {
  json cells = json::array();
  for (auto [i, r] : d.missing_cells) cells.push_back({i, r});
  json chains = json::array();
  for (const auto& c : d.chains) chains.push_back(to_json(c));
  return {{"format", kDrawsFormat},
          {"version", kDrawsVersion},
          {"schema", to_json(d.schema)},
          {"prior", to_json(d.prior)},
          {"scaling", to_json(d.scaling)},
          {"config", to_json(d.config)},
          {"n", d.n},
          {"missing_cells", cells},
          {"chains", chains}};
}

inline json to_json(const RetainedState& s) {
  json clusters = json::array();
  for (const auto& c : s.clusters.clusters) {
    json subs = json::array();
    for (const auto& sub : c.subs)
      subs.push_back({{"size", sub.size},
                      {"treatment", sub.omega.treatment_probs},
                      {"pi", sub.omega.pi},
                      {"mu", sub.omega.mu},
                      {"tau2", sub.omega.tau2}});
    json cj = {{"size", c.size}, {"beta", io_detail::vec(c.theta.beta)}, {"subs", subs}};
    if (c.theta.sigma2) cj["sigma2"] = *c.theta.sigma2;
    clusters.push_back(cj);
  }
  return {{"chain", s.chain},
          {"iteration", s.iteration},
          {"alpha_theta", s.hyper.alpha_theta},
          {"alpha_omega", s.hyper.alpha_omega},
          {"clusters", clusters},
          {"imputed", s.imputed}};
}

inline RetainedState retained_from_json(const json& j, int line) {
  using io_detail::field;
  RetainedState s;
  s.chain = field<int>(j, "chain", line);
  s.iteration = field<int>(j, "iteration", line);
  s.hyper.alpha_theta = field<double>(j, "alpha_theta", line);
  s.hyper.alpha_omega = field<double>(j, "alpha_omega", line);
  s.imputed = field<std::vector<double>>(j, "imputed", line);
  const json& cl = j.at("clusters");
  for (std::size_t jj = 0; jj < cl.size(); ++jj) {
    const json& c = cl[jj];
    YCluster y;
    y.size = field<int>(c, "size", line);
    y.theta.beta = io_detail::to_vec(c.at("beta"));
    if (c.contains("sigma2")) y.theta.sigma2 = c.at("sigma2").get<double>();
    const json& subs = c.at("subs");
    for (std::size_t l = 0; l < subs.size(); ++l) {
      SubCluster sub;
      sub.size = field<int>(subs[l], "size", line);
      sub.omega.treatment_probs = field<std::vector<double>>(subs[l], "treatment", line);
      sub.omega.pi = field<std::vector<double>>(subs[l], "pi", line);
      sub.omega.mu = field<std::vector<double>>(subs[l], "mu", line);
      sub.omega.tau2 = field<std::vector<double>>(subs[l], "tau2", line);
      sub.omega.refresh();
      for (int t = 0; t < sub.size; ++t) {
        s.clusters.sy.push_back(static_cast<int>(jj));
        s.clusters.sx.push_back(static_cast<int>(l));
      }
      y.subs.push_back(std::move(sub));
    }
    s.clusters.clusters.push_back(std::move(y));
  }
  try {
    s.clusters.check_invariants();
  } catch (const Error& e) {
    throw ParseError(std::string("inconsistent cluster record: ") + e.what(), line);
  }
  return s;
}

/// Incremental writer so long chains need not be held in memory.
class DrawsWriter {
 public:
  explicit DrawsWriter(std::ostream& os) : os_(&os) {}
  void header(const PosteriorDraws& d) { *os_ << draws_header(d).dump() << '\n'; }
  void state(const RetainedState& s) { *os_ << to_json(s).dump() << '\n'; }

 private:
  std::ostream* os_;
};

inline void write_draws(std::ostream& os, const PosteriorDraws& d) {
  DrawsWriter w(os);
  w.header(d);
  for (const auto& s : d.states) w.state(s);
}

inline void write_draws(const std::string& path, const PosteriorDraws& d) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_draws(os, d);
}

inline PosteriorDraws read_draws(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty draws file", 0);
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("draws header is not JSON: ") + e.what(), 1);
  }
  if (h.value("format", "") != kDrawsFormat) throw ParseError("not an edpci draws file", 1);
  if (h.value("version", 0) != kDrawsVersion)
    throw ParseError("unsupported draws version " + std::to_string(h.value("version", 0)), 1);
  PosteriorDraws d;
  try {
    d.schema = schema_from_json(h.at("schema"));
    d.prior = prior_from_json(h.at("prior"));
    d.scaling = scaling_from_json(h.at("scaling"));
    d.config = sampler_config_from_json(h.at("config"));
    d.n = h.at("n");
    for (const auto& c : h.at("missing_cells")) d.missing_cells.emplace_back(c.at(0).get<int>(), c.at(1).get<int>());
    for (const auto& c : h.at("chains")) d.chains.push_back(chain_report_from_json(c));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad draws header: ") + e.what(), 1);
  }
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      d.states.push_back(retained_from_json(j, row));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad draws record: ") + e.what(), row);
    }
    if (d.states.back().clusters.n() != d.n) throw ParseError("cluster sizes do not sum to n", row);
  }
  return d;
}

inline PosteriorDraws read_draws(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open draws file '" + path + "'", 0);
  return read_draws(is);
}

// ---------------------------------------------------------------------------
// effect outputs

inline void write_effect_draws_csv(std::ostream& os, const EffectResult& r) {
  os << "chain,iteration,value,arm1,arm0,valid\n";
  for (const auto& d : r.draws)
    os << d.chain << ',' << d.iteration << ',' << detail::format_double(d.value) << ','
       << detail::format_double(d.arm1) << ',' << detail::format_double(d.arm0) << ',' << (d.valid ? 1 : 0) << '\n';
}

inline json to_json(const EffectEstimate& e) {
  return {{"id", e.id},
          {"functional", to_string(e.functional)},
          {"median", e.median},
          {"lower", e.lower},
          {"upper", e.upper},
          {"excluded", e.excluded},
          {"population_draws", e.population_draws},
          {"prior_predictive_draws", e.prior_predictive_draws},
          {"iterations_used", e.iterations_used}};
}

inline void write_effect_summary_csv(std::ostream& os, const std::vector<EffectEstimate>& es) {
  os << "id,functional,median,lower,upper,excluded,population_draws,prior_predictive_draws,iterations_used\n";
  for (const auto& e : es)
    os << e.id << ',' << to_string(e.functional) << ',' << detail::format_double(e.median) << ','
       << detail::format_double(e.lower) << ',' << detail::format_double(e.upper) << ',' << e.excluded << ','
       << e.population_draws << ',' << e.prior_predictive_draws << ',' << e.iterations_used << '\n';
}

}  // namespace edpci
