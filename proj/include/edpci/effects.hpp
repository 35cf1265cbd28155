#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cluster_state.hpp"
#include "data.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "sampler.hpp"

namespace edpci {

enum class Functional {
  mean_difference,
  relative_risk,
  risk_difference,
  att_difference,
  conditional_difference,
  quantile_difference,
  cdf_value,
};

inline std::string to_string(Functional f) {
  switch (f) {
    case Functional::mean_difference: return "mean_difference";
    case Functional::relative_risk: return "relative_risk";
    case Functional::risk_difference: return "risk_difference";
    case Functional::att_difference: return "att_difference";
    case Functional::conditional_difference: return "conditional_difference";
    case Functional::quantile_difference: return "quantile_difference";
    case Functional::cdf_value: return "cdf_value";
  }
  return "unknown";
}

inline Functional parse_functional(std::string_view s) {
  for (auto f : {Functional::mean_difference, Functional::relative_risk, Functional::risk_difference,
                 Functional::att_difference, Functional::conditional_difference, Functional::quantile_difference,
                 Functional::cdf_value})
    if (to_string(f) == s) return f;
  throw ValidationError("unknown estimand '" + std::string(s) + "'");
}

/// One causal functional to extract from the posterior.
struct EffectQuery {
  std::string id = "effect";
  Functional functional = Functional::mean_difference;
  int treatment = 1;   // a
  int reference = 0;   // a'
  int att_group = 1;   // conditioning arm for att_difference
  std::vector<std::pair<std::string, double>> conditioning;  // V = v, original scale
  double quantile = 0.5;
  double threshold = 0.0;  // y for cdf_value, original scale
  int population_draws = 1000;  // M

  void validate(const VariableSchema& schema) const {
    const bool binary = schema.outcome_kind == VariableKind::binary;
    if ((functional == Functional::quantile_difference || functional == Functional::cdf_value) && binary)
      throw ValidationError("estimand/outcome mismatch: " + to_string(functional) + " requires a continuous outcome");
    if ((functional == Functional::relative_risk || functional == Functional::risk_difference) && !binary)
      throw ValidationError("estimand/outcome mismatch: " + to_string(functional) + " requires a binary outcome");
    for (int t : {treatment, reference, att_group})
      if (t < 0 || t >= schema.treatment_levels) throw ValidationError("treatment level out of range");
    if (!(quantile > 0.0 && quantile < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
    if (population_draws < 1) throw ValidationError("population_draws (M) must be >= 1");
    if (functional == Functional::conditional_difference && conditioning.empty())
      throw ValidationError("conditional_difference requires a conditioning set");
    for (const auto& [name, v] : conditioning) {
      const int r = schema.covariate_index(name);
      if (r < 0) throw ValidationError("unknown covariate '" + name + "' in conditioning spec");
      if (schema.covariates[r].kind == VariableKind::binary && v != 0.0 && v != 1.0)
        throw ValidationError("binary covariate '" + name + "' conditioned on a non 0/1 value");
    }
  }
};

enum class PriorPredictiveMode { exact, monte_carlo };

/// Model-wide constants needed to evaluate predictive quantities.
struct EffectContext {
  ModelDims dims;
  PriorSpec prior;
  ScalingParams scaling;
  int n = 0;
  PriorPredictiveMode mode = PriorPredictiveMode::exact;
  int m0 = 50;

  static EffectContext from(const PosteriorDraws& d, PriorPredictiveMode mode = PriorPredictiveMode::exact) {
    return {d.dims(), d.prior, d.scaling, d.n, mode, d.config.prior_predictive_draws};
  }
};

/// Prior-predictive terms for a not-yet-observed cluster. Covariate
/// marginals are closed form (Beta-Bernoulli, Student t); in Monte Carlo
/// mode the continuous block and E0 use M0 cached prior draws instead. The
/// predictive outcome CDF always averages over M0 cached variance draws.
class PriorPredictive {
 public:
  PriorPredictive(const EffectContext& ctx, Rng& rng) : ctx_(&ctx) {
    const auto& pr = ctx.prior;
    const int m0 = ctx.m0;
    sigma2_.resize(m0);
    for (auto& s : sigma2_) s = rng.scaled_inv_chi_square(pr.outcome_nu, pr.outcome_scale2);
    if (ctx.mode == PriorPredictiveMode::monte_carlo) {
      mu_ = RowMatrix(m0, ctx.dims.p2);
      tau2_ = RowMatrix(m0, ctx.dims.p2);
      for (int m = 0; m < m0; ++m)
        for (int c = 0; c < ctx.dims.p2; ++c) {
          tau2_(m, c) = rng.scaled_inv_chi_square(pr.cont_nu, pr.cont_scale2);
          mu_(m, c) = rng.normal(pr.cont_mu, std::sqrt(tau2_(m, c) / pr.cont_c));
        }
      beta_ = RowMatrix(m0, ctx.dims.design_dim());
      for (int m = 0; m < m0; ++m)
        for (int c = 0; c < ctx.dims.design_dim(); ++c)
          beta_(m, c) = pr.beta_mean[c] + std::sqrt(pr.beta_var) * rng.normal();
    }
  }

  /// log K0 restricted to covariate components `idx` at `values`
  /// (treatment excluded).
  double log_covariates(std::span<const int> idx, const double* values) const {
    const auto& dims = ctx_->dims;
    double s = 0.0;
    std::vector<int> cont;
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const int r = idx[t];
      if (r < dims.p1 || ctx_->mode == PriorPredictiveMode::exact)
        s += log_prior_predictive_component(r, values[t], ctx_->prior, dims);
      else
        cont.push_back(static_cast<int>(t));
    }
    if (!cont.empty()) {
      std::vector<double> logs(mu_.rows());
      for (Eigen::Index m = 0; m < mu_.rows(); ++m) {
        double v = 0.0;
        for (int t : cont) {
          const int c = idx[t] - dims.p1;
          v += normal_logpdf(values[t], mu_(m, c), tau2_(m, c));
        }
        logs[m] = v;
      }
      s += log_sum_exp(logs) - std::log(static_cast<double>(logs.size()));
    }
    return s;
  }

  /// log K0(a, l) over the full covariate row (a enters through 1/q).
  double log_K0(const double* l) const {
    const int p = ctx_->dims.p();
    if (all_idx_.size() != static_cast<std::size_t>(p)) {
      all_idx_.resize(p);
      for (int r = 0; r < p; ++r) all_idx_[r] = r;
    }
    return log_prior_predictive_treatment(ctx_->dims) + log_covariates(all_idx_, l);
  }

  double log_K0_treatment() const { return log_prior_predictive_treatment(ctx_->dims); }

  double E0(const double* x) const {
    const int d = ctx_->dims.design_dim();
    if (ctx_->mode == PriorPredictiveMode::exact)
      return prior_predictive_E0_exact(std::span<const double>(x, d), ctx_->prior, ctx_->dims.outcome);
    double s = 0.0;
    for (Eigen::Index m = 0; m < beta_.rows(); ++m) {
      double eta = 0.0;
      for (int c = 0; c < d; ++c) eta += x[c] * beta_(m, c);
      s += outcome_mean_from_eta(eta, ctx_->dims.outcome);
    }
    return s / static_cast<double>(beta_.rows());
  }

  /// Prior-predictive CDF of a standardised Normal outcome at y given
  /// design row summaries (x beta0, |x|^2).
  double F0(double y, double mean0, double xnorm2) const {
    double s = 0.0;
    for (double s2 : sigma2_) s += normal_cdf((y - mean0) / std::sqrt(s2 + ctx_->prior.beta_var * xnorm2));
    return s / static_cast<double>(sigma2_.size());
  }

 private:
  const EffectContext* ctx_;
  std::vector<double> sigma2_;
  RowMatrix mu_, tau2_, beta_;
  mutable std::vector<int> all_idx_;
};

/// Conditional regression E(Y | A = a, L = l) implied by one posterior state:
/// a mixture of the cluster GLMs and the prior-predictive mean, with
/// covariate-dependent weights.
class PredictiveMixture {
 public:
  PredictiveMixture(const ClusterState& st, const HyperState& h, const EffectContext& ctx, const PriorPredictive& pp)
      : st_(&st), ctx_(&ctx), pp_(&pp) {
    const double n = st.n() > 0 ? st.n() : ctx.n;
    log_new_y_ = std::log(h.alpha_theta) - std::log(h.alpha_theta + n);
    for (const auto& cl : st.clusters) {
      const double nj = cl.size;
      log_y_.push_back(std::log(nj) - std::log(h.alpha_theta + n));
      log_new_x_.push_back(std::log(h.alpha_omega) - std::log(h.alpha_omega + nj));
      std::vector<double> lx;
      for (const auto& sub : cl.subs) lx.push_back(std::log(static_cast<double>(sub.size)) - std::log(h.alpha_omega + nj));
      log_x_.push_back(std::move(lx));
    }
  }

  int k() const { return static_cast<int>(log_y_.size()); }

  /// Normalised weights w_1..w_k, w_{k+1} for every requested arm.
  /// `weights` is laid out arm-major with k + 1 entries per arm.
  void weights(const double* l, std::span<const int> arms, std::vector<double>& weights) const {
    const auto& dims = ctx_->dims;
    const int k = this->k();
    block_.resize(0);
    for (const auto& cl : st_->clusters)
      for (const auto& sub : cl.subs) block_.push_back(covariate_block_loglik(l, sub.omega, dims));
    const double lk0 = pp_->log_K0(l);
    weights.assign(arms.size() * (k + 1), 0.0);
    for (std::size_t u = 0; u < arms.size(); ++u) {
      const int a = arms[u];
      double* w = weights.data() + u * (k + 1);
      std::size_t b = 0;
      for (int j = 0; j < k; ++j) {
        const auto& cl = st_->clusters[j];
        double acc = log_new_x_[j] + lk0;
        for (std::size_t l2 = 0; l2 < cl.subs.size(); ++l2, ++b)
          acc = log_add_exp(acc, log_x_[j][l2] + treatment_loglik(a, cl.subs[l2].omega) + block_[b]);
        w[j] = log_y_[j] + acc;
      }
      w[k] = log_new_y_ + lk0;
      try {
        normalize_log_weights(std::span<double>(w, k + 1));
      } catch (const NumericalError&) {
        throw NumericalError("predictive weights underflow: covariate row lies outside every cluster");
      }
    }
  }

  /// E(Y | a, l) on the model (standardised) scale.
  double conditional_mean(int a, std::span<const double> l) const {
    double out;
    conditional_means(l.data(), std::span<const int>(&a, 1), std::span<double>(&out, 1));
    return out;
  }

  void conditional_means(const double* l, std::span<const int> arms, std::span<double> out) const {
    const auto& dims = ctx_->dims;
    const int k = this->k();
    weights(l, arms, w_);
    x_.resize(dims.design_dim());
    for (std::size_t u = 0; u < arms.size(); ++u) {
      fill_design_row(dims, arms[u], l, x_.data());
      const double* w = w_.data() + u * (k + 1);
      double e = w[k] > 0.0 ? w[k] * pp_->E0(x_.data()) : 0.0;
      for (int j = 0; j < k; ++j)
        if (w[j] > 0.0)
          e += w[j] * outcome_mean_from_eta(linear_predictor(x_.data(), st_->clusters[j].theta), dims.outcome);
      out[u] = e;
    }
  }

  /// P(Y <= y | a, l) for a continuous outcome, y on the standardised scale.
  double conditional_cdf(int a, std::span<const double> l, double y) const {
    const auto& dims = ctx_->dims;
    const int k = this->k();
    weights(l.data(), std::span<const int>(&a, 1), w_);
    x_.resize(dims.design_dim());
    fill_design_row(dims, a, l.data(), x_.data());
    const Eigen::Map<const Eigen::VectorXd> xv(x_.data(), dims.design_dim());
    double f = w_[k] > 0.0 ? w_[k] * pp_->F0(y, xv.dot(ctx_->prior.beta_mean), xv.squaredNorm()) : 0.0;
    for (int j = 0; j < k; ++j) {
      const auto& th = st_->clusters[j].theta;
      f += w_[j] * normal_cdf((y - linear_predictor(x_.data(), th)) / std::sqrt(*th.sigma2));
    }
    return f;
  }

  const ClusterState& state() const { return *st_; }
  const EffectContext& context() const { return *ctx_; }
  const PriorPredictive& prior_predictive() const { return *pp_; }

 private:
  const ClusterState* st_;
  const EffectContext* ctx_;
  const PriorPredictive* pp_;
  double log_new_y_;
  std::vector<double> log_y_, log_new_x_;
  std::vector<std::vector<double>> log_x_;
  mutable std::vector<double> block_, w_, x_;
};

/// Conditioning event for the covariate population.
struct Conditioning {
  enum class Kind { none, treatment, covariates } kind = Kind::none;
  int treatment = 0;
  std::vector<int> idx;        // covariate indices in V
  std::vector<double> values;  // standardised values v

  static Conditioning none() { return {}; }
  static Conditioning on_treatment(int a) { return {Kind::treatment, a, {}, {}}; }
  static Conditioning on_covariates(std::vector<int> idx, std::vector<double> values) {
    return {Kind::covariates, 0, std::move(idx), std::move(values)};
  }

  /// Builds a covariate conditioning from original-scale values.
  static Conditioning from_query(const EffectQuery& q, const VariableSchema& schema, const ScalingParams& sc) {
    Conditioning c;
    c.kind = Kind::covariates;
    const int p1 = schema.num_binary();
    for (const auto& [name, v] : q.conditioning) {
      const int r = schema.covariate_index(name);
      c.idx.push_back(r);
      c.values.push_back(r < p1 ? v : sc.to_standard(r - p1, v));
    }
    return c;
  }
};

/// Labels of a population draw: s_y = -1 for a new y-cluster, s_x = -1 for
/// a new x-subcluster.
struct PopulationLabel {
  int sy;
  int sx;
};

/// M draws of the covariates from the fitted joint model (optionally
/// conditioned on A = a' or V = v). Rows are standardised covariate vectors.
inline RowMatrix sample_covariate_population(const ClusterState& st, const HyperState& h, const EffectContext& ctx,
                                             const PriorPredictive& pp, int M, const Conditioning& cond, Rng& rng,
                                             std::vector<PopulationLabel>* labels = nullptr) {
  if (M < 1) throw ValidationError("population size M must be >= 1");
  const auto& dims = ctx.dims;
  const double n = st.n() > 0 ? st.n() : ctx.n;
  std::vector<double> logw;
  std::vector<PopulationLabel> slots;
  auto tilt = [&](const CovariateParams* w) -> double {
    switch (cond.kind) {
      case Conditioning::Kind::none: return 0.0;
      case Conditioning::Kind::treatment:
        return w ? treatment_loglik(cond.treatment, *w) : pp.log_K0_treatment();
      case Conditioning::Kind::covariates: {
        if (!w) return pp.log_covariates(cond.idx, cond.values.data());
        double s = 0.0;
        for (std::size_t t = 0; t < cond.idx.size(); ++t)
          s += covariate_component_loglik(cond.idx[t], cond.values[t], *w, dims);
        return s;
      }
    }
    return 0.0;
  };
  const double tilt0 = tilt(nullptr);
  for (int j = 0; j < st.k(); ++j) {
    const auto& cl = st.clusters[j];
    const double nj = cl.size;
    const double ly = std::log(nj) - std::log(h.alpha_theta + n);
    for (int l = 0; l < static_cast<int>(cl.subs.size()); ++l) {
      logw.push_back(ly + std::log(static_cast<double>(cl.subs[l].size)) - std::log(h.alpha_omega + nj) +
                     tilt(&cl.subs[l].omega));
      slots.push_back({j, l});
    }
    logw.push_back(ly + std::log(h.alpha_omega) - std::log(h.alpha_omega + nj) + tilt0);
    slots.push_back({j, -1});
  }
  logw.push_back(std::log(h.alpha_theta) - std::log(h.alpha_theta + n) + tilt0);
  slots.push_back({-1, -1});
  try {
    normalize_log_weights(logw);
  } catch (const NumericalError&) {
    throw PositivityError("conditioning event has zero mass under every cluster (positivity violation)");
  }

  std::vector<char> fixed(dims.p(), 0);
  if (cond.kind == Conditioning::Kind::covariates)
    for (int r : cond.idx) fixed[r] = 1;
  RowMatrix pop(M, dims.p());
  if (labels) labels->resize(M);
  CovariateParams fresh;
  for (int m = 0; m < M; ++m) {
    const PopulationLabel s = slots[sample_categorical(logw, rng)];
    if (labels) (*labels)[m] = s;
    const CovariateParams* w;
    if (s.sx >= 0) {
      w = &st.clusters[s.sy].subs[s.sx].omega;
    } else {
      sample_prior_covariate(ctx.prior, dims, rng, fresh);
      w = &fresh;
    }
    for (int r = 0; r < dims.p(); ++r) {
      if (fixed[r]) continue;
      if (r < dims.p1) {
        pop(m, r) = rng.uniform() < w->pi[r] ? 1.0 : 0.0;
      } else {
        const int c = r - dims.p1;
        pop(m, r) = rng.normal(w->mu[c], std::sqrt(w->tau2[c]));
      }
    }
    if (cond.kind == Conditioning::Kind::covariates)
      for (std::size_t t = 0; t < cond.idx.size(); ++t) pop(m, cond.idx[t]) = cond.values[t];
  }
  return pop;
}

/// Monte Carlo g-formula: average of E(Y | a, l^m) over the population, one
/// value per requested arm, on the standardised scale.
inline std::vector<double> mean_potential_outcomes(const PredictiveMixture& mix, const RowMatrix& population,
                                                   std::span<const int> arms) {
  std::vector<double> acc(arms.size(), 0.0), tmp(arms.size());
  for (Eigen::Index m = 0; m < population.rows(); ++m) {
    mix.conditional_means(population.row(m).data(), arms, tmp);
    for (std::size_t u = 0; u < arms.size(); ++u) acc[u] += tmp[u];
  }
  for (auto& v : acc) v /= static_cast<double>(population.rows());
  return acc;
}

inline double mean_potential_outcome(int a, const PredictiveMixture& mix, const RowMatrix& population) {
  return mean_potential_outcomes(mix, population, std::span<const int>(&a, 1))[0];
}

/// Frozen mixture-of-Normals representation of P(Y^a <= y) over a fixed
/// population; y on the standardised scale.
class PotentialOutcomeCdf {
 public:
  PotentialOutcomeCdf(int a, const PredictiveMixture& mix, const RowMatrix& population) : pp_(&mix.prior_predictive()) {
    const auto& ctx = mix.context();
    const auto& dims = ctx.dims;
    if (dims.outcome != VariableKind::continuous) throw ValidationError("CDF requires a continuous outcome");
    const int k = mix.k();
    const auto& st = mix.state();
    std::vector<double> w;
    std::vector<double> x(dims.design_dim());
    for (Eigen::Index m = 0; m < population.rows(); ++m) {
      mix.weights(population.row(m).data(), std::span<const int>(&a, 1), w);
      fill_design_row(dims, a, population.row(m).data(), x.data());
      for (int j = 0; j < k; ++j) {
        if (w[j] <= 0.0) continue;
        const auto& th = st.clusters[j].theta;
        comp_w_.push_back(w[j]);
        comp_mean_.push_back(linear_predictor(x.data(), th));
        comp_sd_.push_back(std::sqrt(*th.sigma2));
      }
      if (w[k] > 0.0) {
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), dims.design_dim());
        new_w_.push_back(w[k]);
        new_mean_.push_back(xv.dot(ctx.prior.beta_mean));
        new_norm2_.push_back(xv.squaredNorm());
      }
    }
    count_ = static_cast<double>(population.rows());
  }

  double operator()(double y) const {
    double s = 0.0;
    for (std::size_t t = 0; t < comp_w_.size(); ++t) s += comp_w_[t] * normal_cdf((y - comp_mean_[t]) / comp_sd_[t]);
    for (std::size_t t = 0; t < new_w_.size(); ++t) s += new_w_[t] * pp_->F0(y, new_mean_[t], new_norm2_[t]);
    return std::clamp(s / count_, 0.0, 1.0);
  }

  /// Smallest y (to `tol`) with F(y) >= p, by bracketed bisection.
  double inverse(double p, double tol) const {
    double lo = -1.0, hi = 1.0, width = 1.0;
    int expansions = 0;
    while ((*this)(lo) > p) {
      lo -= width;
      width *= 2.0;
      if (++expansions > 200) throw NumericalError("quantile bracket failure");
    }
    width = 1.0;
    while ((*this)(hi) < p) {
      hi += width;
      width *= 2.0;
      if (++expansions > 200) throw NumericalError("quantile bracket failure");
    }
    for (int it = 0; it < 400 && hi - lo > tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((*this)(mid) < p)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  const PriorPredictive* pp_;
  std::vector<double> comp_w_, comp_mean_, comp_sd_, new_w_, new_mean_, new_norm2_;
  double count_ = 1.0;
};

/// Functional value from one retained state. `arm1`/`arm0` carry the two
/// arm-level quantities (original scale) where meaningful.
struct EffectDraw {
  int chain = 0;
  int iteration = 0;
  double value = 0.0;
  double arm1 = 0.0;
  double arm0 = 0.0;
  bool valid = true;
};

inline EffectDraw evaluate_effect(const EffectQuery& q, const VariableSchema& schema, const ClusterState& st,
                                  const HyperState& h, const EffectContext& ctx, Rng& rng) {
  const PriorPredictive pp(ctx, rng);
  const PredictiveMixture mix(st, h, ctx, pp);
  const auto& sc = ctx.scaling;
  Conditioning cond = Conditioning::none();
  if (q.functional == Functional::att_difference) cond = Conditioning::on_treatment(q.att_group);
  if (q.functional == Functional::conditional_difference) cond = Conditioning::from_query(q, schema, sc);
  const RowMatrix pop = sample_covariate_population(st, h, ctx, pp, q.population_draws, cond, rng);
  EffectDraw d;
  const int arms[2] = {q.treatment, q.reference};
  switch (q.functional) {
    case Functional::quantile_difference: {
      const double tol = 1e-6 / sc.outcome_scale;
      const double q1 = PotentialOutcomeCdf(q.treatment, mix, pop).inverse(q.quantile, tol);
      const double q0 = PotentialOutcomeCdf(q.reference, mix, pop).inverse(q.quantile, tol);
      d.arm1 = sc.outcome_from_standard(q1);
      d.arm0 = sc.outcome_from_standard(q0);
      d.value = d.arm1 - d.arm0;
      return d;
    }
    case Functional::cdf_value: {
      d.value = PotentialOutcomeCdf(q.treatment, mix, pop)(sc.outcome_to_standard(q.threshold));
      d.arm1 = d.value;
      return d;
    }
    default: break;
  }
  const auto means = mean_potential_outcomes(mix, pop, arms);
  d.arm1 = sc.outcome_from_standard(means[0]);
  d.arm0 = sc.outcome_from_standard(means[1]);
  if (q.functional == Functional::relative_risk) {
    d.valid = d.arm0 != 0.0 && std::isfinite(d.arm0);
    d.value = d.valid ? d.arm1 / d.arm0 : 0.0;
  } else {
    d.value = d.arm1 - d.arm0;
  }
  return d;
}

/// Posterior summary of one functional.
struct EffectEstimate {
  std::string id;
  Functional functional = Functional::mean_difference;
  std::vector<double> draws;
  double median = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
  int excluded = 0;
  int population_draws = 0;
  int prior_predictive_draws = 0;
  int iterations_used = 0;
};

inline EffectEstimate effect_summary(const std::vector<EffectDraw>& draws, const EffectQuery& q, int m0 = 0) {
  EffectEstimate e;
  e.id = q.id;
  e.functional = q.functional;
  e.population_draws = q.population_draws;
  e.prior_predictive_draws = m0;
  for (const auto& d : draws) {
    if (d.valid && std::isfinite(d.value))
      e.draws.push_back(d.value);
    else
      ++e.excluded;
  }
  e.iterations_used = static_cast<int>(e.draws.size());
  if (e.draws.size() < 2) throw ValidationError("effect summary needs at least two valid draws");
  e.median = median(e.draws);
  e.lower = quantile(e.draws, 0.025);
  e.upper = quantile(e.draws, 0.975);
  return e;
}

inline EffectEstimate effect_summary(const std::vector<double>& values, const EffectQuery& q) {
  std::vector<EffectDraw> d;
  for (double v : values) d.push_back({0, 0, v, 0.0, 0.0, true});
  return effect_summary(d, q);
}

struct EffectOptions {
  int stride = 100;         // use every stride-th retained state of each chain
  std::uint64_t seed = 1;
  int query_index = 0;
  int workers = 1;
  PriorPredictiveMode mode = PriorPredictiveMode::exact;
};

struct EffectResult {
  std::vector<EffectDraw> draws;
  EffectEstimate estimate;
};

/// Selects retained states (per chain, every stride-th) and evaluates the
/// query on each in parallel with streams keyed by (seed, state, query).
inline EffectResult compute_effect(const PosteriorDraws& post, const EffectQuery& q, const EffectOptions& opt) {
  q.validate(post.schema);
  if (opt.stride < 1) throw ValidationError("stride must be >= 1");
  const EffectContext ctx = EffectContext::from(post, opt.mode);
  std::vector<int> chosen;
  std::vector<int> position(post.num_chains() > 0 ? post.num_chains() : 1, 0);
  for (int s = 0; s < static_cast<int>(post.states.size()); ++s) {
    const int c = post.states[s].chain;
    if (c >= static_cast<int>(position.size())) position.resize(c + 1, 0);
    if (++position[c] % opt.stride == 0) chosen.push_back(s);
  }
  EffectResult res;
  res.draws.resize(chosen.size());
  parallel_for(static_cast<int>(chosen.size()), opt.workers, [&](int t) {
    const auto& rs = post.states[chosen[t]];
    Rng rng = Rng::derive(opt.seed, {static_cast<std::uint64_t>(chosen[t]), static_cast<std::uint64_t>(opt.query_index),
                                     0xeffec7u});
    EffectDraw d = evaluate_effect(q, post.schema, rs.clusters, rs.hyper, ctx, rng);
    d.chain = rs.chain;
    d.iteration = rs.iteration;
    res.draws[t] = d;
  });
  res.estimate = effect_summary(res.draws, q, ctx.m0);
  return res;
}

}  // namespace edpci
