#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cluster_state.hpp"
#include "data.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace edpci {

struct SamplerConfig {
  int iterations = 2000;
  int burn_in = 500;
  int thin = 1;
  int aux = 5;  // auxiliary clusters per urn level (m)
  int chains = 1;
  std::uint64_t seed = 1;
  int prior_predictive_draws = 50;  // M0, used by post-processing
  double beta_proposal_scale = 1.0;
  int beta_inner_iterations = 5;
  double alpha_omega_step = 0.5;  // sd of the log-scale random walk
  bool adapt = true;              // adapt the beta proposal scale during burn-in
  bool impute = true;
  bool update_alpha = true;
  std::optional<double> initial_alpha_theta;  // drawn from the prior when absent
  std::optional<double> initial_alpha_omega;
  bool init_single_cluster = true;
  bool check_invariants = false;
  double reference_ridge = 0.0;

  int retained() const { return (iterations - burn_in) / thin; }

  void validate() const {
    if (!(iterations > burn_in)) throw ValidationError("iterations must exceed burn_in");
    if (burn_in < 0) throw ValidationError("burn_in must be >= 0");
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (aux < 1) throw ValidationError("aux (m) must be >= 1");
    if (chains < 1) throw ValidationError("chains must be >= 1");
    if (prior_predictive_draws < 1) throw ValidationError("prior_predictive_draws must be >= 1");
    if (!(beta_proposal_scale > 0.0)) throw ValidationError("beta_proposal_scale must be > 0");
    if (beta_inner_iterations < 1) throw ValidationError("beta_inner_iterations must be >= 1");
    if (!(alpha_omega_step > 0.0)) throw ValidationError("alpha_omega_step must be > 0");
    for (auto a : {initial_alpha_theta, initial_alpha_omega})
      if (a && !(*a >= 0.0)) throw ValidationError("initial concentrations must be >= 0");
    if (!update_alpha && (!initial_alpha_theta || !initial_alpha_omega))
      throw ValidationError("fixed concentrations require initial_alpha_theta and initial_alpha_omega");
  }
};

/// Working copy of the (standardised) data used inside a chain. Missing
/// cells hold their current imputed value.
struct ModelData {
  ModelDims dims;
  int n = 0;
  std::vector<double> y;
  std::vector<int> a;
  RowMatrix cov;     // n x p covariates, binary first
  RowMatrix design;  // n x d outcome design rows
  std::vector<std::pair<int, int>> missing_cells;

  static ModelData from(const Dataset& d) {
    d.validate();
    ModelData m;
    m.dims = ModelDims::from(d.schema);
    m.n = d.n();
    m.y.assign(d.y.data(), d.y.data() + d.n());
    m.a = d.a;
    m.cov = RowMatrix::Zero(d.n(), m.dims.p());
    m.design = RowMatrix::Zero(d.n(), m.dims.design_dim());
    for (int i = 0; i < d.n(); ++i) {
      for (int r = 0; r < m.dims.p(); ++r) {
        if (d.missing(i, r))
          m.missing_cells.emplace_back(i, r);
        else
          m.cov(i, r) = d.l(i, r);
      }
      m.refresh_design_row(i);
    }
    return m;
  }

  void refresh_design_row(int i) { fill_design_row(dims, a[i], cov.row(i).data(), design.row(i).data()); }

  void set_covariate(int i, int r, double v) {
    cov(i, r) = v;
    design(i, dims.covariate_offset() + r) = v;
  }

  std::vector<double> imputed_snapshot() const {
    std::vector<double> out;
    out.reserve(missing_cells.size());
    for (auto [i, r] : missing_cells) out.push_back(cov(i, r));
    return out;
  }
};

/// Auxiliary parameters for one membership update: m candidate x-subclusters
/// for every occupied y-cluster, and m candidate y-clusters each carrying one
/// outcome parameter and one covariate parameter.
struct ProposalTable {
  std::vector<std::vector<CovariateParams>> aux_sub;
  std::vector<OutcomeParams> aux_theta;
  std::vector<CovariateParams> aux_omega;

  int size() const {
    int s = static_cast<int>(aux_theta.size());
    for (const auto& v : aux_sub) s += static_cast<int>(v.size());
    return s;
  }
};

/// Removes subject i from the partition, compacts labels, and fills the
/// auxiliary slots. If i was alone in its y-cluster, that cluster's
/// (theta, omega) become auxiliary y-slot 0; if i was alone only in its
/// x-subcluster, that omega becomes auxiliary x-slot 0 of its y-cluster.
inline void relabel_and_augment(int i, ClusterState& st, const PriorSpec& prior, const ModelDims& dims, int m,
                                Rng& rng, ProposalTable& table) {
  const int j = st.sy[i];
  const int l = st.sx[i];
  int seeded_y = 0;
  int seeded_sub_cluster = -1;
  CovariateParams seed_omega;
  OutcomeParams seed_theta;
  if (j >= 0) {
    auto& cl = st.clusters[j];
    --cl.size;
    --cl.subs[l].size;
    if (cl.size == 0) {
      seed_theta = std::move(cl.theta);
      seed_omega = std::move(cl.subs[l].omega);
      seeded_y = 1;
      st.clusters.erase(st.clusters.begin() + j);
      for (int t = 0; t < st.n(); ++t)
        if (st.sy[t] > j) --st.sy[t];
    } else if (cl.subs[l].size == 0) {
      seed_omega = std::move(cl.subs[l].omega);
      cl.subs.erase(cl.subs.begin() + l);
      for (int t = 0; t < st.n(); ++t)
        if (st.sy[t] == j && st.sx[t] > l) --st.sx[t];
      seeded_sub_cluster = j;
    }
  }
  st.sy[i] = -1;
  st.sx[i] = -1;

  const int k = st.k();
  table.aux_sub.resize(k);
  for (int c = 0; c < k; ++c) {
    auto& slots = table.aux_sub[c];
    slots.resize(m);
    int start = 0;
    if (c == seeded_sub_cluster) {
      slots[0] = std::move(seed_omega);
      start = 1;
    }
    for (int t = start; t < m; ++t) sample_prior_covariate(prior, dims, rng, slots[t]);
  }
  table.aux_theta.resize(m);
  table.aux_omega.resize(m);
  int start = 0;
  if (seeded_y) {
    table.aux_theta[0] = std::move(seed_theta);
    table.aux_omega[0] = std::move(seed_omega);
    start = 1;
  }
  for (int t = start; t < m; ++t) {
    sample_prior_outcome(prior, dims, rng, table.aux_theta[t]);
    sample_prior_covariate(prior, dims, rng, table.aux_omega[t]);
  }
}

inline ProposalTable relabel_and_augment(int i, ClusterState& st, const PriorSpec& prior, const ModelDims& dims, int m,
                                         Rng& rng) {
  ProposalTable table;
  relabel_and_augment(i, st, prior, dims, m, rng, table);
  return table;
}

/// Unnormalised log-probabilities of every candidate assignment for subject
/// i (already removed from `st`). Layout: for each y-cluster j, its occupied
/// subclusters then its m auxiliary subclusters; finally the m auxiliary
/// y-clusters.
inline void membership_log_weights(int i, const ClusterState& st, const ProposalTable& table, const ModelData& data,
                                   const HyperState& hyper, int m, std::vector<double>& out) {
  out.clear();
  const auto& dims = data.dims;
  const double* x = data.design.row(i).data();
  const double* l = data.cov.row(i).data();
  const int a = data.a[i];
  const double y = data.y[i];
  const double log_aw_m = std::log(hyper.alpha_omega / m);
  for (int j = 0; j < st.k(); ++j) {
    const auto& cl = st.clusters[j];
    const double nj = cl.size;
    const double base = std::log(nj) - std::log(nj + hyper.alpha_omega) +
                        outcome_loglik_eta(y, linear_predictor(x, cl.theta), cl.theta, dims.outcome);
    for (const auto& sub : cl.subs)
      out.push_back(base + std::log(static_cast<double>(sub.size)) + treatment_loglik(a, sub.omega) +
                    covariate_block_loglik(l, sub.omega, dims));
    for (const auto& w : table.aux_sub[j])
      out.push_back(base + log_aw_m + treatment_loglik(a, w) + covariate_block_loglik(l, w, dims));
  }
  const double log_at_m = std::log(hyper.alpha_theta / m);
  for (int t = 0; t < m; ++t) {
    const auto& th = table.aux_theta[t];
    const auto& w = table.aux_omega[t];
    out.push_back(log_at_m + outcome_loglik_eta(y, linear_predictor(x, th), th, dims.outcome) +
                  treatment_loglik(a, w) + covariate_block_loglik(l, w, dims));
  }
}

/// Places subject i at flat candidate index `choice` (layout as in
/// membership_log_weights). Chosen auxiliaries become occupied clusters.
inline void assign_membership(int i, int choice, ClusterState& st, ProposalTable& table, int m) {
  int offset = 0;
  for (int j = 0; j < st.k(); ++j) {
    auto& cl = st.clusters[j];
    const int kj = static_cast<int>(cl.subs.size());
    if (choice < offset + kj + m) {
      const int l = choice - offset;
      if (l < kj) {
        ++cl.subs[l].size;
        st.sx[i] = l;
      } else {
        cl.subs.push_back(SubCluster{1, std::move(table.aux_sub[j][l - kj])});
        st.sx[i] = kj;
      }
      ++cl.size;
      st.sy[i] = j;
      return;
    }
    offset += kj + m;
  }
  const int t = choice - offset;
  if (t < 0 || t >= m) throw Error("membership choice out of range");
  YCluster cl;
  cl.size = 1;
  cl.theta = std::move(table.aux_theta[t]);
  cl.subs.push_back(SubCluster{1, std::move(table.aux_omega[t])});
  st.clusters.push_back(std::move(cl));
  st.sy[i] = st.k() - 1;
  st.sx[i] = 0;
}

inline void update_cluster_membership(int i, ClusterState& st, ProposalTable& table, const ModelData& data,
                                      const HyperState& hyper, int m, Rng& rng, std::vector<double>& logw,
                                      std::vector<double>& scratch) {
  membership_log_weights(i, st, table, data, hyper, m, logw);
  int choice;
  try {
    choice = sample_log_categorical(logw, scratch, rng);
  } catch (const NumericalError& e) {
    throw NumericalError("membership update for subject " + std::to_string(i) + ": " + e.what());
  }
  assign_membership(i, choice, st, table, m);
}

/// Refreshes theta for every occupied y-cluster and omega for every
/// occupied x-subcluster given the partition.
inline void update_all_params(ClusterState& st, const ModelData& data, const PriorSpec& prior,
                              MetropolisTuning& tuning, Rng& rng) {
  const auto& dims = data.dims;
  const int k = st.k();
  std::vector<std::vector<int>> members(k);
  for (int i = 0; i < data.n; ++i) members[st.sy[i]].push_back(i);
  for (int j = 0; j < k; ++j) {
    auto& cl = st.clusters[j];
    if (cl.size <= 0 || static_cast<int>(members[j].size()) != cl.size)
      throw Error("parameter update reached an empty or inconsistent y-cluster");
    const int nj = cl.size;
    RowMatrix X(nj, dims.design_dim());
    Eigen::VectorXd y(nj);
    std::vector<CovariateSuffStats> stats(cl.subs.size(), CovariateSuffStats(dims));
    for (int t = 0; t < nj; ++t) {
      const int i = members[j][t];
      X.row(t) = data.design.row(i);
      y[t] = data.y[i];
      stats[st.sx[i]].add(data.a[i], data.cov.row(i).data(), dims);
    }
    update_outcome_params(X, y, cl.theta, prior, dims, tuning, rng);
    for (std::size_t l = 0; l < cl.subs.size(); ++l) {
      if (cl.subs[l].size <= 0) throw Error("parameter update reached an empty x-subcluster");
      update_covariate_params(stats[l], prior, dims, rng, cl.subs[l].omega);
    }
  }
}

/// Odds of the higher-shape component in the two-component Gamma mixture
/// used to update alpha_theta given the auxiliary eta.
inline double alpha_theta_mixture_odds(int k, int n, double eta, const PriorSpec& prior) {
  return (prior.alpha_shape + k - 1.0) / (n * (prior.alpha_rate - std::log(eta)));
}

inline double update_alpha_theta(int k, int n, double alpha, const PriorSpec& prior, Rng& rng) {
  const double eta = rng.beta(alpha + 1.0, static_cast<double>(n));
  const double rate = prior.alpha_rate - std::log(eta);
  const double odds = alpha_theta_mixture_odds(k, n, eta, prior);
  const double pi = odds / (1.0 + odds);
  const double shape = rng.uniform() < pi ? prior.alpha_shape + k : prior.alpha_shape + k - 1.0;
  return std::max(rng.gamma(shape, rate), 1e-300);
}

/// log p(alpha_omega | partition) up to a constant.
inline double alpha_omega_log_target(double alpha, const ClusterState& st, const PriorSpec& prior) {
  if (!(alpha > 0.0)) return kNegInf;
  const double log_a = std::log(alpha);
  double s = (prior.alpha_shape - 1.0) * log_a - prior.alpha_rate * alpha;
  for (const auto& cl : st.clusters) {
    const double nj = cl.size;
    const double kj = static_cast<double>(cl.subs.size());
    s += (kj - 1.0) * log_a + std::log(alpha + nj) + std::lgamma(alpha + 1.0) + std::lgamma(nj) -
         std::lgamma(alpha + 1.0 + nj);
  }
  return s;
}

/// One random-walk Metropolis step on log(alpha_omega).
inline double update_alpha_omega(const ClusterState& st, double alpha, const PriorSpec& prior, double step, Rng& rng,
                                 bool* accepted = nullptr) {
  if (!(step > 0.0)) throw ValidationError("alpha_omega proposal scale must be > 0");
  const double proposal = alpha * std::exp(step * rng.normal());
  const double log_ratio = alpha_omega_log_target(proposal, st, prior) - alpha_omega_log_target(alpha, st, prior) +
                           std::log(proposal) - std::log(alpha);
  const bool acc = std::log(rng.uniform_open()) < log_ratio;
  if (accepted) *accepted = acc;
  return acc ? proposal : alpha;
}

/// P(L_r = 1 | rest) for a missing binary covariate r of subject i.
inline double binary_imputation_probability(int i, int r, const ClusterState& st, const ModelData& data) {
  const auto& cl = st.clusters[st.sy[i]];
  const auto& w = cl.subs[st.sx[i]].omega;
  const auto& dims = data.dims;
  std::vector<double> x(data.design.row(i).data(), data.design.row(i).data() + dims.design_dim());
  x[dims.covariate_offset() + r] = 1.0;
  const double l1 = w.log_pi[r] + outcome_loglik_eta(data.y[i], linear_predictor(x.data(), cl.theta), cl.theta,
                                                     dims.outcome);
  x[dims.covariate_offset() + r] = 0.0;
  const double l0 = w.log1m_pi[r] + outcome_loglik_eta(data.y[i], linear_predictor(x.data(), cl.theta), cl.theta,
                                                       dims.outcome);
  if (l1 == kNegInf) return 0.0;
  if (l0 == kNegInf) return 1.0;
  return inv_logit(l1 - l0);
}

inline int impute_missing_binary(int i, int r, const ClusterState& st, ModelData& data, Rng& rng) {
  const double p = binary_imputation_probability(i, r, st, data);
  const int v = rng.uniform() < p ? 1 : 0;
  data.set_covariate(i, r, v);
  return v;
}

/// Log full conditional (up to a constant) of a continuous covariate r of
/// subject i at value v.
inline double continuous_imputation_log_target(int i, int r, double v, const ClusterState& st,
                                               const ModelData& data) {
  const auto& cl = st.clusters[st.sy[i]];
  const auto& w = cl.subs[st.sx[i]].omega;
  const auto& dims = data.dims;
  const double eta_without = linear_predictor(data.design.row(i).data(), cl.theta) -
                             cl.theta.beta[dims.covariate_offset() + r] * data.cov(i, r);
  const double eta = eta_without + cl.theta.beta[dims.covariate_offset() + r] * v;
  return covariate_component_loglik(r, v, w, dims) + outcome_loglik_eta(data.y[i], eta, cl.theta, dims.outcome);
}

/// One random-walk Metropolis step for a missing continuous covariate;
/// the proposal sd is the subcluster's tau.
inline double impute_missing_continuous(int i, int r, const ClusterState& st, ModelData& data, Rng& rng,
                                        bool* accepted = nullptr) {
  const auto& w = st.clusters[st.sy[i]].subs[st.sx[i]].omega;
  const int c = r - data.dims.p1;
  const double current = data.cov(i, r);
  const double proposal = current + std::sqrt(w.tau2[c]) * rng.normal();
  const double log_ratio = continuous_imputation_log_target(i, r, proposal, st, data) -
                           continuous_imputation_log_target(i, r, current, st, data);
  const bool acc = std::log(rng.uniform_open()) < log_ratio;
  if (accepted) *accepted = acc;
  if (acc) data.set_covariate(i, r, proposal);
  return data.cov(i, r);
}

struct AcceptanceCounter {
  long accepted = 0;
  long proposed = 0;
  void record(bool a) {
    ++proposed;
    if (a) ++accepted;
  }
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// One MCMC chain over the nested partition, cluster parameters,
/// concentrations and missing covariates.
class Chain {
 public:
  Chain(ModelData data, PriorSpec prior, SamplerConfig config, Rng rng)
      : data_(std::move(data)), prior_(std::move(prior)), cfg_(std::move(config)), rng_(std::move(rng)) {
    prior_.validate(data_.dims);
    tuning_.scale = cfg_.beta_proposal_scale;
    tuning_.inner_iterations = cfg_.beta_inner_iterations;
  }

  /// Fills missing cells from the observed entries of their column, places
  /// everyone in one cluster (or singletons) and draws initial parameters.
  void initialize() {
    const auto& dims = data_.dims;
    for (int r = 0; r < dims.p(); ++r) {
      std::vector<double> observed;
      std::vector<char> is_missing(data_.n, 0);
      for (auto [i, rr] : data_.missing_cells)
        if (rr == r) is_missing[i] = 1;
      for (int i = 0; i < data_.n; ++i)
        if (!is_missing[i]) observed.push_back(data_.cov(i, r));
      for (auto [i, rr] : data_.missing_cells) {
        if (rr != r) continue;
        if (observed.empty()) throw ValidationError("covariate column has no observed values");
        data_.set_covariate(i, r, observed[rng_.uniform_int(static_cast<int>(observed.size()))]);
      }
    }
    hyper_.alpha_theta = cfg_.initial_alpha_theta ? *cfg_.initial_alpha_theta
                                                  : rng_.gamma(prior_.alpha_shape, prior_.alpha_rate);
    hyper_.alpha_omega = cfg_.initial_alpha_omega ? *cfg_.initial_alpha_omega
                                                  : rng_.gamma(prior_.alpha_shape, prior_.alpha_rate);
    state_ = ClusterState{};
    state_.sy.assign(data_.n, 0);
    state_.sx.assign(data_.n, 0);
    if (cfg_.init_single_cluster) {
      YCluster cl;
      cl.size = data_.n;
      cl.theta.beta = prior_.beta_mean;
      if (dims.outcome == VariableKind::continuous) cl.theta.sigma2 = prior_.outcome_scale2;
      cl.subs.push_back(SubCluster{data_.n, {}});
      state_.clusters.push_back(std::move(cl));
    } else {
      for (int i = 0; i < data_.n; ++i) {
        YCluster cl;
        cl.size = 1;
        cl.theta.beta = prior_.beta_mean;
        if (dims.outcome == VariableKind::continuous) cl.theta.sigma2 = prior_.outcome_scale2;
        cl.subs.push_back(SubCluster{1, {}});
        state_.clusters.push_back(std::move(cl));
        state_.sy[i] = i;
      }
    }
    update_all_params(state_, data_, prior_, tuning_, rng_);
    tuning_.reset_counts();
    iteration_ = 0;
  }

  /// One full Gibbs iteration: impute, reassign every subject, refresh
  /// parameters, update concentrations.
  void sweep() {
    const bool burning = iteration_ < cfg_.burn_in;
    tuning_.adapt = cfg_.adapt && burning;
    if (cfg_.impute) impute_all();
    for (int i = 0; i < data_.n; ++i) {
      relabel_and_augment(i, state_, prior_, data_.dims, cfg_.aux, rng_, table_);
      update_cluster_membership(i, state_, table_, data_, hyper_, cfg_.aux, rng_, logw_, scratch_);
    }
    update_all_params(state_, data_, prior_, tuning_, rng_);
    if (cfg_.update_alpha) {
      hyper_.alpha_theta = update_alpha_theta(state_.k(), data_.n, hyper_.alpha_theta, prior_, rng_);
      bool acc = false;
      hyper_.alpha_omega = update_alpha_omega(state_, hyper_.alpha_omega, prior_, cfg_.alpha_omega_step, rng_, &acc);
      alpha_acceptance_.record(acc);
    }
    if (cfg_.check_invariants) state_.check_invariants();
    ++iteration_;
  }

  void impute_all() {
    for (auto [i, r] : data_.missing_cells) {
      if (r < data_.dims.p1) {
        impute_missing_binary(i, r, state_, data_, rng_);
      } else {
        bool acc = false;
        impute_missing_continuous(i, r, state_, data_, rng_, &acc);
        impute_acceptance_.record(acc);
      }
    }
  }

  int iteration() const { return iteration_; }
  const ClusterState& state() const { return state_; }
  const HyperState& hyper() const { return hyper_; }
  const ModelData& data() const { return data_; }
  const PriorSpec& prior() const { return prior_; }
  const SamplerConfig& config() const { return cfg_; }
  const MetropolisTuning& beta_tuning() const { return tuning_; }
  const AcceptanceCounter& alpha_omega_acceptance() const { return alpha_acceptance_; }
  const AcceptanceCounter& impute_acceptance() const { return impute_acceptance_; }

  // Direct access for tests and for Geweke-style data regeneration.
  ClusterState& mutable_state() { return state_; }
  HyperState& mutable_hyper() { return hyper_; }
  ModelData& mutable_data() { return data_; }
  Rng& rng() { return rng_; }

 private:
  ModelData data_;
  PriorSpec prior_;
  SamplerConfig cfg_;
  Rng rng_;
  ClusterState state_;
  HyperState hyper_;
  MetropolisTuning tuning_;
  AcceptanceCounter alpha_acceptance_;
  AcceptanceCounter impute_acceptance_;
  ProposalTable table_;
  std::vector<double> logw_, scratch_;
  int iteration_ = 0;
};

struct RetainedState {
  int chain = 0;
  int iteration = 0;
  ClusterState clusters;
  HyperState hyper;
  std::vector<double> imputed;  // standardised values, order of PosteriorDraws::missing_cells
};

struct ChainReport {
  int chain = 0;
  double beta_acceptance = 0.0;
  double beta_proposal_scale = 1.0;
  double alpha_omega_acceptance = 0.0;
  double impute_acceptance = 0.0;
  double seconds = 0.0;  // wall time; not part of deterministic outputs
};

/// Everything post-processing needs: retained states plus the model context.
struct PosteriorDraws {
  VariableSchema schema;
  PriorSpec prior;
  ScalingParams scaling;
  SamplerConfig config;
  int n = 0;
  std::vector<std::pair<int, int>> missing_cells;
  std::vector<RetainedState> states;
  std::vector<ChainReport> chains;

  ModelDims dims() const { return ModelDims::from(schema); }
  int num_chains() const { return static_cast<int>(chains.size()); }
};

/// Runs one chain and returns its retained (post burn-in, thinned) states.
/// `on_retained`, when set, is called for each retained state and the state
/// is not stored.
inline std::vector<RetainedState> run_chain(const ModelData& data, const SamplerConfig& cfg, const PriorSpec& prior,
                                            Rng rng, int chain_index = 0, ChainReport* report = nullptr,
                                            const std::function<void(RetainedState&&)>& on_retained = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Chain chain(data, prior, cfg, std::move(rng));
  chain.initialize();
  std::vector<RetainedState> out;
  for (int t = 0; t < cfg.iterations; ++t) {
    try {
      chain.sweep();
    } catch (const Error& e) {
      throw NumericalError("chain " + std::to_string(chain_index) + ", iteration " + std::to_string(t) + ": " +
                           e.what());
    }
    if (t >= cfg.burn_in && (t - cfg.burn_in + 1) % cfg.thin == 0) {
      RetainedState rs{chain_index, t, chain.state(), chain.hyper(), chain.data().imputed_snapshot()};
      if (on_retained)
        on_retained(std::move(rs));
      else
        out.push_back(std::move(rs));
    }
  }
  if (report) {
    report->chain = chain_index;
    report->beta_acceptance = chain.beta_tuning().acceptance_rate();
    report->beta_proposal_scale = chain.beta_tuning().scale;
    report->alpha_omega_acceptance = chain.alpha_omega_acceptance().rate();
    report->impute_acceptance = chain.impute_acceptance().rate();
    report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

/// Pooled GLM used to centre the coefficient prior. When the unpenalised fit
/// has no MLE (separation, common in small complete-case subsets) it is
/// refitted with ridge 1/beta_var, the mode under the coefficient prior itself.
/// Returns the coefficients and the ridge actually used.
inline std::pair<Eigen::VectorXd, double> reference_beta(const Dataset& standardized, double beta_var,
                                                         double ridge = 0.0) {
  try {
    return {fit_reference_glm(standardized, ridge).beta, ridge};
  } catch (const ConvergenceError&) {
    if (ridge > 0.0) throw;
    const double fallback = 1.0 / beta_var;
    return {fit_reference_glm(standardized, fallback).beta, fallback};
  }
}

/// Prior centred on the pooled GLM fitted to the standardised data.
inline PriorSpec empirical_prior(const Dataset& standardized, const PriorSpec& base, double ridge = 0.0,
                                 double* ridge_used = nullptr) {
  PriorSpec prior = base;
  const auto [beta, used] = reference_beta(standardized, base.beta_var, ridge);
  prior.beta_mean = beta;
  if (ridge_used) *ridge_used = used;
  return prior;
}

/// Standardises, centres the coefficient prior on the pooled fit, and runs
/// `cfg.chains` chains with streams derived from (seed, chain).
inline PosteriorDraws fit_edp(const Dataset& raw, const SamplerConfig& cfg, const PriorSpec& base_prior,
                              int workers = 1) {
  cfg.validate();
  auto [std_data, scaling] = standardize_continuous(raw);
  PosteriorDraws draws;
  draws.schema = raw.schema;
  draws.scaling = scaling;
  draws.config = cfg;
  draws.n = raw.n();
  draws.prior = empirical_prior(std_data, base_prior, cfg.reference_ridge, &draws.config.reference_ridge);
  const ModelData data = ModelData::from(std_data);
  draws.missing_cells = data.missing_cells;
  std::vector<std::vector<RetainedState>> per_chain(cfg.chains);
  draws.chains.resize(cfg.chains);
  parallel_for(cfg.chains, workers, [&](int c) {
    per_chain[c] = run_chain(data, cfg, draws.prior, Rng::derive(cfg.seed, {static_cast<std::uint64_t>(c), 0x5eedu}),
                             c, &draws.chains[c]);
  });
  for (auto& v : per_chain)
    for (auto& s : v) draws.states.push_back(std::move(s));
  return draws;
}

}  // namespace edpci
