#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "error.hpp"
#include "numeric.hpp"
#include "sampler.hpp"

namespace edpci {

/// Potential scale reduction over >= 2 equal-length traces.
inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw ValidationError("Gelman-Rubin needs at least 2 chains");
  const std::size_t n = chains[0].size();
  if (n < 10) throw ValidationError("Gelman-Rubin needs traces of length >= 10");
  for (const auto& c : chains)
    if (c.size() != n) throw ValidationError("Gelman-Rubin needs equal-length traces");
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double W = mean(vars);
  if (!(W > 0.0)) throw NumericalError("degenerate trace: zero within-chain variance");
  const double between = variance(means);  // B / n
  const double nn = static_cast<double>(n);
  return std::sqrt((W * (nn - 1.0) / nn + between) / W);
}

/// Effective sample size by Geyer's initial monotone sequence; never
/// exceeds the trace length.
inline double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 10) throw ValidationError("effective sample size needs a trace of length >= 10");
  const double m = mean(x);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - m) * (x[t + lag] - m);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) throw NumericalError("degenerate trace: constant values");
  double prev = autocov(0) + autocov(1);
  double sum = prev;
  for (std::size_t lag = 2; lag + 1 < n; lag += 2) {
    double pair = autocov(lag) + autocov(lag + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    sum += pair;
    prev = pair;
  }
  const double tau = -1.0 + 2.0 * sum / g0;
  const double nn = static_cast<double>(n);
  if (tau <= 1.0) return nn;
  return std::min(nn, nn / tau);
}

struct OccupancySummary {
  std::vector<int> k;                    // per retained state
  std::vector<std::vector<int>> kj;      // subclusters per y-cluster, per state
  std::map<int, int> frequency;          // k -> count
  int modal_k = 0;
  double mean_k = 0.0;
  int min_k = 0;
  int max_k = 0;
};

inline OccupancySummary cluster_occupancy_summary(const std::vector<RetainedState>& states) {
  if (states.empty()) throw ValidationError("occupancy summary needs retained states");
  OccupancySummary o;
  for (const auto& s : states) {
    o.k.push_back(s.clusters.k());
    o.kj.push_back(s.clusters.subcluster_counts());
    ++o.frequency[s.clusters.k()];
  }
  int best = -1;
  for (auto [k, c] : o.frequency)
    if (c > best) {
      best = c;
      o.modal_k = k;
    }
  o.mean_k = 0.0;
  for (int k : o.k) o.mean_k += k;
  o.mean_k /= static_cast<double>(o.k.size());
  o.min_k = *std::min_element(o.k.begin(), o.k.end());
  o.max_k = *std::max_element(o.k.begin(), o.k.end());
  return o;
}

inline OccupancySummary cluster_occupancy_summary(const PosteriorDraws& d) { return cluster_occupancy_summary(d.states); }

/// Per-chain traces of one scalar.
struct NamedTrace {
  std::string name;
  std::vector<std::vector<double>> chains;
};

struct TraceDiagnostics {
  std::string name;
  double rhat = 0.0;  // NaN when unavailable
  double ess = 0.0;   // summed over chains
  int draws = 0;
  double mean = 0.0;
  std::string note;
};

struct DiagnosticsReport {
  std::vector<TraceDiagnostics> traces;
  OccupancySummary occupancy;
  std::vector<ChainReport> chains;
};

/// Scalar traces that survive label switching: concentrations and k.
inline std::vector<NamedTrace> hyper_traces(const PosteriorDraws& d) {
  const int c = std::max(1, d.num_chains());
  NamedTrace at{"alpha_theta", std::vector<std::vector<double>>(c)};
  NamedTrace aw{"alpha_omega", std::vector<std::vector<double>>(c)};
  NamedTrace k{"k", std::vector<std::vector<double>>(c)};
  for (const auto& s : d.states) {
    if (s.chain >= c) continue;
    at.chains[s.chain].push_back(s.hyper.alpha_theta);
    aw.chains[s.chain].push_back(s.hyper.alpha_omega);
    k.chains[s.chain].push_back(s.clusters.k());
  }
  return {at, aw, k};
}

inline TraceDiagnostics diagnose_trace(const NamedTrace& t) {
  TraceDiagnostics d;
  d.name = t.name;
  d.rhat = std::nan("");
  std::vector<double> pooled;
  for (const auto& c : t.chains) pooled.insert(pooled.end(), c.begin(), c.end());
  d.draws = static_cast<int>(pooled.size());
  d.mean = pooled.empty() ? std::nan("") : mean(pooled);
  try {
    d.rhat = gelman_rubin(t.chains);
  } catch (const Error& e) {
    d.note = e.what();
  }
  try {
    double ess = 0.0;
    for (const auto& c : t.chains) ess += effective_sample_size(c);
    d.ess = ess;
  } catch (const Error& e) {
    d.ess = std::nan("");
    if (d.note.empty()) d.note = e.what();
  }
  return d;
}

inline DiagnosticsReport diagnose(const PosteriorDraws& d, const std::vector<NamedTrace>& extra = {}) {
  if (d.num_chains() < 2)
    throw ValidationError("diagnostics need at least 2 chains; refit with chains >= 2 (found " +
                          std::to_string(d.num_chains()) + ")");
  DiagnosticsReport r;
  for (const auto& t : extra) r.traces.push_back(diagnose_trace(t));
  for (const auto& t : hyper_traces(d)) r.traces.push_back(diagnose_trace(t));
  r.occupancy = cluster_occupancy_summary(d);
  r.chains = d.chains;
  return r;
}

namespace detail {
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
}  // namespace detail

inline nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j;
  j["traces"] = nlohmann::json::array();
  for (const auto& t : r.traces) {
    nlohmann::json e{{"name", t.name},
                     {"gelman_rubin", detail::finite_or_null(t.rhat)},
                     {"ess", detail::finite_or_null(t.ess)},
                     {"draws", t.draws},
                     {"mean", detail::finite_or_null(t.mean)}};
    if (!t.note.empty()) e["note"] = t.note;
    j["traces"].push_back(e);
  }
  nlohmann::json freq = nlohmann::json::object();
  for (auto [k, c] : r.occupancy.frequency) freq[std::to_string(k)] = c;
  j["occupancy"] = {{"modal_k", r.occupancy.modal_k},
                    {"mean_k", r.occupancy.mean_k},
                    {"min_k", r.occupancy.min_k},
                    {"max_k", r.occupancy.max_k},
                    {"frequency", freq}};
  j["chains"] = nlohmann::json::array();
  for (const auto& c : r.chains)
    j["chains"].push_back({{"chain", c.chain},
                           {"beta_acceptance", c.beta_acceptance},
                           {"beta_proposal_scale", c.beta_proposal_scale},
                           {"alpha_omega_acceptance", c.alpha_omega_acceptance},
                           {"impute_acceptance", c.impute_acceptance}});
  return j;
}

inline std::string to_text(const DiagnosticsReport& r) {
  std::string s = fmt::format("{:<24} {:>10} {:>10} {:>8} {:>12}\n", "trace", "R-hat", "ESS", "draws", "mean");
  for (const auto& t : r.traces) {
    s += fmt::format("{:<24} {:>10.4f} {:>10.1f} {:>8} {:>12.5g}", t.name, t.rhat, t.ess, t.draws, t.mean);
    if (!t.note.empty()) s += "  (" + t.note + ")";
    s += "\n";
  }
  s += fmt::format("\nclusters: modal k = {}, mean k = {:.2f}, range [{}, {}]\n", r.occupancy.modal_k,
                   r.occupancy.mean_k, r.occupancy.min_k, r.occupancy.max_k);
  s += "k frequency:";
  for (auto [k, c] : r.occupancy.frequency) s += fmt::format(" {}:{}", k, c);
  s += "\n\nchain  beta-acc  alpha_omega-acc  impute-acc\n";
  for (const auto& c : r.chains)
    s += fmt::format("{:>5}  {:>8.3f}  {:>15.3f}  {:>10.3f}\n", c.chain, c.beta_acceptance, c.alpha_omega_acceptance,
                     c.impute_acceptance);
  return s;
}

/// Long-format trace export: trace,chain,index,value.
inline void write_trace_csv(std::ostream& os, const std::vector<NamedTrace>& traces) {
  os << "trace,chain,index,value\n";
  for (const auto& t : traces)
    for (std::size_t c = 0; c < t.chains.size(); ++c)
      for (std::size_t i = 0; i < t.chains[c].size(); ++i)
        os << t.name << ',' << c << ',' << i << ',' << detail::format_double(t.chains[c][i]) << '\n';
}

}  // namespace edpci
