#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "error.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace edpci {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sizes shared by every kernel: q treatment levels, p1 binary and p2
/// continuous covariates. The outcome design row is (1, treatment
/// indicators for levels 1..q-1, covariates).
struct ModelDims {
  VariableKind outcome = VariableKind::binary;
  int q = 2;
  int p1 = 0;
  int p2 = 0;

  int p() const { return p1 + p2; }
  int design_dim() const { return q + p1 + p2; }
  int treatment_offset() const { return 1; }
  int covariate_offset() const { return q; }

  static ModelDims from(const VariableSchema& s) {
    return {s.outcome_kind, s.treatment_levels, s.num_binary(), s.num_continuous()};
  }
  bool operator==(const ModelDims&) const = default;
};

inline void fill_design_row(const ModelDims& dims, int a, const double* l, double* out) {
  out[0] = 1.0;
  for (int t = 1; t < dims.q; ++t) out[t] = (a == t) ? 1.0 : 0.0;
  for (int r = 0; r < dims.p(); ++r) out[dims.q + r] = l[r];
}

inline Eigen::VectorXd design_row(const ModelDims& dims, int a, std::span<const double> l) {
  Eigen::VectorXd x(dims.design_dim());
  fill_design_row(dims, a, l.data(), x.data());
  return x;
}

/// Hyperparameters of the base measure and of the concentration priors.
struct PriorSpec {
  Eigen::VectorXd beta_mean;        // prior mean of regression coefficients
  double beta_var = 4.0;            // isotropic prior variance of coefficients
  double binary_a = 1.0;            // Beta prior for binary covariates
  double binary_b = 1.0;
  double treatment_conc = 1.0;      // symmetric Dirichlet on treatment probabilities
  double cont_nu = 2.0;             // scale-inv-chi2 prior on covariate variances
  double cont_scale2 = 1.0;
  double cont_c = 0.5;              // mean | variance ~ N(cont_mu, variance / cont_c)
  double cont_mu = 0.0;
  double outcome_nu = 2.0;          // scale-inv-chi2 prior on the linear-outcome variance
  double outcome_scale2 = 1.0;
  double alpha_shape = 1.0;         // Gamma(shape, rate) prior on both concentrations
  double alpha_rate = 1.0;

  static PriorSpec defaults(const ModelDims& dims) {
    PriorSpec p;
    p.beta_mean = Eigen::VectorXd::Zero(dims.design_dim());
    return p;
  }

  void validate(const ModelDims& dims) const {
    if (beta_mean.size() != dims.design_dim())
      throw ValidationError("prior beta_mean has length " + std::to_string(beta_mean.size()) + ", expected " +
                            std::to_string(dims.design_dim()));
    if (!beta_mean.allFinite()) throw ValidationError("prior beta_mean must be finite");
    for (double v : {beta_var, binary_a, binary_b, treatment_conc, cont_nu, cont_scale2, cont_c, outcome_nu,
                     outcome_scale2, alpha_shape, alpha_rate})
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("prior scale/shape parameters must be > 0");
    if (!std::isfinite(cont_mu)) throw ValidationError("prior cont_mu must be finite");
  }
};

/// Local GLM parameters of one y-cluster. `sigma2` is present only for a
/// continuous (Normal) outcome.
struct OutcomeParams {
  Eigen::VectorXd beta;
  std::optional<double> sigma2;
};

/// Locally independent covariate kernel parameters of one x-subcluster.
/// Call refresh() after editing the public vectors; the log caches feed the
/// hot likelihood loops.
struct CovariateParams {
  std::vector<double> treatment_probs;  // q
  std::vector<double> pi;               // p1 Bernoulli probabilities
  std::vector<double> mu;               // p2 Normal means
  std::vector<double> tau2;             // p2 Normal variances

  std::vector<double> log_treatment, log_pi, log1m_pi, log_norm, inv_tau2;

  void refresh() {
    log_treatment.resize(treatment_probs.size());
    for (std::size_t t = 0; t < treatment_probs.size(); ++t) log_treatment[t] = std::log(treatment_probs[t]);
    log_pi.resize(pi.size());
    log1m_pi.resize(pi.size());
    for (std::size_t r = 0; r < pi.size(); ++r) {
      log_pi[r] = std::log(pi[r]);
      log1m_pi[r] = std::log1p(-pi[r]);
    }
    log_norm.resize(tau2.size());
    inv_tau2.resize(tau2.size());
    for (std::size_t r = 0; r < tau2.size(); ++r) {
      log_norm[r] = -kLogSqrt2Pi - 0.5 * std::log(tau2[r]);
      inv_tau2[r] = 1.0 / tau2[r];
    }
  }
};

// ---------------------------------------------------------------------------
// Likelihood kernels

inline double outcome_mean_from_eta(double eta, VariableKind kind) {
  return kind == VariableKind::binary ? inv_logit(eta) : eta;
}

inline double linear_predictor(const double* x, const OutcomeParams& theta) {
  const auto d = theta.beta.size();
  double eta = 0.0;
  for (Eigen::Index c = 0; c < d; ++c) eta += x[c] * theta.beta[c];
  return eta;
}

inline double outcome_loglik_eta(double y, double eta, const OutcomeParams& theta, VariableKind kind) {
  if (kind == VariableKind::binary) return y > 0.5 ? log_inv_logit(eta) : log1m_inv_logit(eta);
  const double var = *theta.sigma2;
  const double z = y - eta;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * z * z / var;
}

/// log K(y | x, theta) for a design row x.
inline double outcome_loglik(double y, std::span<const double> x, const OutcomeParams& theta, VariableKind kind) {
  if (static_cast<Eigen::Index>(x.size()) != theta.beta.size())
    throw ValidationError("design row length does not match beta");
  if (kind == VariableKind::continuous && (!theta.sigma2 || !(*theta.sigma2 > 0.0)))
    throw ValidationError("continuous outcome requires sigma2 > 0");
  const double v = outcome_loglik_eta(y, linear_predictor(x.data(), theta), theta, kind);
  if (!std::isfinite(v) || !std::isfinite(y)) throw NumericalError("non-finite outcome log-likelihood");
  return v;
}

inline double treatment_loglik(int a, const CovariateParams& w) { return w.log_treatment[a]; }

/// Log density of a single covariate component r (schema order).
inline double covariate_component_loglik(int r, double v, const CovariateParams& w, const ModelDims& dims) {
  if (r < dims.p1) return v > 0.5 ? w.log_pi[r] : w.log1m_pi[r];
  const int c = r - dims.p1;
  const double z = v - w.mu[c];
  return w.log_norm[c] - 0.5 * z * z * w.inv_tau2[c];
}

/// Sum over the p covariates (treatment excluded).
inline double covariate_block_loglik(const double* l, const CovariateParams& w, const ModelDims& dims) {
  double s = 0.0;
  const double* lp = w.log_pi.data();
  const double* lq = w.log1m_pi.data();
  for (int r = 0; r < dims.p1; ++r) s += l[r] > 0.5 ? lp[r] : lq[r];
  const double* lc = l + dims.p1;
  const double* mu = w.mu.data();
  const double* ln = w.log_norm.data();
  const double* it = w.inv_tau2.data();
  for (int c = 0; c < dims.p2; ++c) {
    const double z = lc[c] - mu[c];
    s += ln[c] - 0.5 * z * z * it[c];
  }
  return s;
}

/// log K(x | omega) where x = (treatment, covariates).
inline double covariate_loglik(int a, std::span<const double> l, const CovariateParams& w, const ModelDims& dims) {
  if (static_cast<int>(l.size()) != dims.p()) throw ValidationError("covariate row length does not match schema");
  const double v = treatment_loglik(a, w) + covariate_block_loglik(l.data(), w, dims);
  if (!std::isfinite(v)) throw NumericalError("non-finite covariate log-likelihood");
  return v;
}

// ---------------------------------------------------------------------------
// Prior draws

inline void sample_prior_covariate(const PriorSpec& prior, const ModelDims& dims, Rng& rng, CovariateParams& out) {
  out.treatment_probs.resize(dims.q);
  if (dims.q == 2 && prior.treatment_conc == 1.0) {
    const double u = rng.uniform_open();
    out.treatment_probs[0] = u;
    out.treatment_probs[1] = 1.0 - u;
  } else {
    double total = 0.0;
    for (int t = 0; t < dims.q; ++t) total += (out.treatment_probs[t] = rng.gamma(prior.treatment_conc, 1.0));
    for (auto& v : out.treatment_probs) v /= total;
  }
  out.pi.resize(dims.p1);
  for (auto& v : out.pi) v = rng.beta(prior.binary_a, prior.binary_b);
  out.mu.resize(dims.p2);
  out.tau2.resize(dims.p2);
  for (int c = 0; c < dims.p2; ++c) {
    out.tau2[c] = rng.scaled_inv_chi_square(prior.cont_nu, prior.cont_scale2);
    out.mu[c] = rng.normal(prior.cont_mu, std::sqrt(out.tau2[c] / prior.cont_c));
  }
  out.refresh();
}

inline void sample_prior_outcome(const PriorSpec& prior, const ModelDims& dims, Rng& rng, OutcomeParams& out) {
  const int d = dims.design_dim();
  out.beta.resize(d);
  const double sd = std::sqrt(prior.beta_var);
  for (int c = 0; c < d; ++c) out.beta[c] = prior.beta_mean[c] + sd * rng.normal();
  if (dims.outcome == VariableKind::continuous)
    out.sigma2 = rng.scaled_inv_chi_square(prior.outcome_nu, prior.outcome_scale2);
  else
    out.sigma2.reset();
}

inline std::pair<OutcomeParams, CovariateParams> sample_prior_params(const PriorSpec& prior, const ModelDims& dims,
                                                                     Rng& rng) {
  std::pair<OutcomeParams, CovariateParams> out;
  sample_prior_outcome(prior, dims, rng, out.first);
  sample_prior_covariate(prior, dims, rng, out.second);
  return out;
}

// ---------------------------------------------------------------------------
// Covariate conjugate updates

/// Sufficient statistics of one x-subcluster (Welford accumulation for the
/// continuous block).
struct CovariateSuffStats {
  int n = 0;
  std::vector<int> treatment_counts;
  std::vector<double> binary_sums;
  std::vector<double> cont_mean;
  std::vector<double> cont_m2;

  explicit CovariateSuffStats(const ModelDims& dims)
      : treatment_counts(dims.q, 0), binary_sums(dims.p1, 0.0), cont_mean(dims.p2, 0.0), cont_m2(dims.p2, 0.0) {}

  void add(int a, const double* l, const ModelDims& dims) {
    ++n;
    ++treatment_counts[a];
    for (int r = 0; r < dims.p1; ++r) binary_sums[r] += l[r];
    for (int c = 0; c < dims.p2; ++c) {
      const double v = l[dims.p1 + c];
      const double delta = v - cont_mean[c];
      cont_mean[c] += delta / n;
      cont_m2[c] += delta * (v - cont_mean[c]);
    }
  }
};

/// Conjugate draw of omega given the subcluster's members. With n = 0 this
/// is a prior draw.
inline void update_covariate_params(const CovariateSuffStats& st, const PriorSpec& prior, const ModelDims& dims,
                                    Rng& rng, CovariateParams& out) {
  out.treatment_probs.resize(dims.q);
  double total = 0.0;
  for (int t = 0; t < dims.q; ++t)
    total += (out.treatment_probs[t] = rng.gamma(prior.treatment_conc + st.treatment_counts[t], 1.0));
  for (auto& v : out.treatment_probs) v /= total;
  out.pi.resize(dims.p1);
  for (int r = 0; r < dims.p1; ++r)
    out.pi[r] = rng.beta(prior.binary_a + st.binary_sums[r], prior.binary_b + st.n - st.binary_sums[r]);
  out.mu.resize(dims.p2);
  out.tau2.resize(dims.p2);
  const double n = st.n;
  for (int c = 0; c < dims.p2; ++c) {
    const double xbar = st.n > 0 ? st.cont_mean[c] : 0.0;
    const double dev = xbar - prior.cont_mu;
    const double nu_n = prior.cont_nu + n;
    const double scale_n =
        (prior.cont_nu * prior.cont_scale2 + st.cont_m2[c] + prior.cont_c * n / (prior.cont_c + n) * dev * dev) / nu_n;
    const double t2 = rng.scaled_inv_chi_square(nu_n, scale_n);
    const double mean_n = (prior.cont_c * prior.cont_mu + n * xbar) / (prior.cont_c + n);
    out.tau2[c] = t2;
    out.mu[c] = rng.normal(mean_n, std::sqrt(t2 / (prior.cont_c + n)));
  }
  out.refresh();
}

// ---------------------------------------------------------------------------
// Outcome updates

/// State of the adaptive random-walk Metropolis used for logistic
/// coefficients. The proposal is N(0, (scale * 2.38)^2 / d * H^{-1}) with
/// H = X'X / 4 + I / beta_var, which depends only on the cluster's design.
struct MetropolisTuning {
  double scale = 1.0;
  int inner_iterations = 5;
  bool adapt = false;
  double target = 0.3;
  long accepted = 0;
  long proposed = 0;
  long adapt_steps = 0;

  void record(bool accept) {
    ++proposed;
    if (accept) ++accepted;
    if (adapt) {
      ++adapt_steps;
      const double gain = std::pow(static_cast<double>(adapt_steps), -0.6);
      scale *= std::exp(gain * ((accept ? 1.0 : 0.0) - target));
      scale = std::clamp(scale, 1e-3, 1e3);
    }
  }
  double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
  void reset_counts() { accepted = proposed = 0; }
};

inline double logistic_log_posterior(const Eigen::Ref<const RowMatrix>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const Eigen::VectorXd& beta, const PriorSpec& prior) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1p_exp(eta[i]);
  return ll - 0.5 * (beta - prior.beta_mean).squaredNorm() / prior.beta_var;
}

/// One parameter refresh of a y-cluster given its members' design rows X and
/// outcomes y. Binary: `tuning.inner_iterations` Metropolis steps on beta.
/// Continuous: Gibbs draws of beta | sigma2 then sigma2 | beta.
/// An empty member set yields a prior draw.
inline void update_outcome_params(const Eigen::Ref<const RowMatrix>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                  OutcomeParams& theta, const PriorSpec& prior, const ModelDims& dims,
                                  MetropolisTuning& tuning, Rng& rng) {
  const int d = dims.design_dim();
  if (X.rows() == 0) {
    sample_prior_outcome(prior, dims, rng, theta);
    return;
  }
  if (dims.outcome == VariableKind::binary) {
    Eigen::MatrixXd H = X.transpose() * X * 0.25;
    H.diagonal().array() += 1.0 / prior.beta_var;
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw NumericalError("proposal precision not positive definite");
    const double step = tuning.scale * 2.38 / std::sqrt(static_cast<double>(d));
    if (theta.beta.size() != d) theta.beta = prior.beta_mean;
    double current = logistic_log_posterior(X, y, theta.beta, prior);
    Eigen::VectorXd z(d);
    for (int it = 0; it < tuning.inner_iterations; ++it) {
      for (int c = 0; c < d; ++c) z[c] = rng.normal();
      Eigen::VectorXd proposal = theta.beta + step * llt.matrixU().solve(z);
      const double cand = logistic_log_posterior(X, y, proposal, prior);
      const bool accept = std::log(rng.uniform_open()) < cand - current;
      if (accept) {
        theta.beta = std::move(proposal);
        current = cand;
      }
      tuning.record(accept);
    }
    theta.sigma2.reset();
    return;
  }
  // Normal outcome: semi-conjugate Gibbs.
  double s2 = theta.sigma2.value_or(prior.outcome_scale2);
  Eigen::MatrixXd P = X.transpose() * X / s2;
  P.diagonal().array() += 1.0 / prior.beta_var;
  Eigen::VectorXd b = X.transpose() * y / s2 + prior.beta_mean / prior.beta_var;
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision not positive definite");
  Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z(d);
  for (int c = 0; c < d; ++c) z[c] = rng.normal();
  theta.beta = mean + llt.matrixU().solve(z);
  const double rss = (y - X * theta.beta).squaredNorm();
  const double nu_n = prior.outcome_nu + static_cast<double>(X.rows());
  s2 = rng.scaled_inv_chi_square(nu_n, (prior.outcome_nu * prior.outcome_scale2 + rss) / nu_n);
  theta.sigma2 = s2;
}

// ---------------------------------------------------------------------------
// Reference (pooled) GLM used to centre the coefficient prior

struct ReferenceFit {
  Eigen::VectorXd beta;
  int iterations = 0;
};

/// Builds (design, outcome) from rows without missing covariates.
inline std::pair<RowMatrix, Eigen::VectorXd> complete_case_design(const Dataset& d) {
  const ModelDims dims = ModelDims::from(d.schema);
  std::vector<int> rows;
  for (int i = 0; i < d.n(); ++i)
    if (!d.missing.row(i).any()) rows.push_back(i);
  RowMatrix X(rows.size(), dims.design_dim());
  Eigen::VectorXd y(rows.size());
  std::vector<double> l(dims.p());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    for (int r = 0; r < dims.p(); ++r) l[r] = d.l(i, r);
    fill_design_row(dims, d.a[i], l.data(), X.row(k).data());
    y[k] = d.y(i);
  }
  return {std::move(X), std::move(y)};
}

/// Logistic MLE by IRLS. `ridge` > 0 adds a ridge penalty on the
/// non-intercept coefficients.
inline ReferenceFit fit_logistic(const Eigen::Ref<const RowMatrix>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                 double ridge = 0.0, int max_iter = 100) {
  const auto d = X.cols();
  ReferenceFit fit;
  fit.beta = Eigen::VectorXd::Zero(d);
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p[i] = inv_logit(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    Eigen::VectorXd grad = X.transpose() * (y - p);
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    if (ridge > 0.0) {
      grad.tail(d - 1) -= ridge * fit.beta.tail(d - 1);
      H.diagonal().tail(d - 1).array() += ridge;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw ConvergenceError("IRLS: singular information matrix");
    const Eigen::VectorXd delta = ldlt.solve(grad);
    fit.beta += delta;
    fit.iterations = it;
    if (!fit.beta.allFinite() || fit.beta.cwiseAbs().maxCoeff() > 30.0)
      throw ConvergenceError(
          "IRLS: coefficients diverging (quasi-complete separation); refit with a ridge penalty "
          "(reference_ridge > 0)");
    if (delta.cwiseAbs().maxCoeff() < 1e-10) return fit;
  }
  throw ConvergenceError("IRLS did not converge after " + std::to_string(max_iter) +
                         " iterations; last iterate max|beta| = " + std::to_string(fit.beta.cwiseAbs().maxCoeff()));
}

inline ReferenceFit fit_linear(const Eigen::Ref<const RowMatrix>& X, const Eigen::Ref<const Eigen::VectorXd>& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw ValidationError("design matrix is not full rank");
  return {qr.solve(y), 1};
}

/// Pooled GLM on complete cases: logistic MLE (binary outcome) or OLS.
inline ReferenceFit fit_reference_glm(const Dataset& d, double ridge = 0.0) {
  auto [X, y] = complete_case_design(d);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (X.rows() < X.cols() || qr.rank() < X.cols()) throw ValidationError("design matrix is not full rank");
  if (d.schema.outcome_kind == VariableKind::binary) return fit_logistic(X, y, ridge);
  return fit_linear(X, y);
}

// ---------------------------------------------------------------------------
// Prior-predictive quantities K0 and E0

/// Exact prior-predictive log density of one covariate component: Beta-
/// Bernoulli for binary, Student t for continuous.
inline double log_prior_predictive_component(int r, double v, const PriorSpec& prior, const ModelDims& dims) {
  if (r < dims.p1) {
    const double p = prior.binary_a / (prior.binary_a + prior.binary_b);
    return v > 0.5 ? std::log(p) : std::log1p(-p);
  }
  return student_t_logpdf(v, prior.cont_nu, prior.cont_mu, prior.cont_scale2 * (1.0 + 1.0 / prior.cont_c));
}

inline double log_prior_predictive_treatment(const ModelDims& dims) { return -std::log(static_cast<double>(dims.q)); }

/// log K0(a, l) in closed form.
inline double log_prior_predictive_K0_exact(int a, std::span<const double> l, const PriorSpec& prior,
                                            const ModelDims& dims) {
  (void)a;
  double s = log_prior_predictive_treatment(dims);
  for (int r = 0; r < dims.p(); ++r) s += log_prior_predictive_component(r, l[r], prior, dims);
  return s;
}

/// Monte Carlo K0(a, l): binary and treatment components use their exact
/// marginals; the continuous block is averaged over M0 joint prior draws.
inline double prior_predictive_K0(int a, std::span<const double> l, const PriorSpec& prior, const ModelDims& dims,
                                  int draws, Rng& rng) {
  if (draws < 1) throw ValidationError("M0 must be >= 1");
  double exact = log_prior_predictive_treatment(dims);
  (void)a;
  for (int r = 0; r < dims.p1; ++r) exact += log_prior_predictive_component(r, l[r], prior, dims);
  if (dims.p2 == 0) return std::exp(exact);
  std::vector<double> logs(draws);
  for (int m = 0; m < draws; ++m) {
    double s = 0.0;
    for (int c = 0; c < dims.p2; ++c) {
      const double t2 = rng.scaled_inv_chi_square(prior.cont_nu, prior.cont_scale2);
      const double mu = rng.normal(prior.cont_mu, std::sqrt(t2 / prior.cont_c));
      s += normal_logpdf(l[dims.p1 + c], mu, t2);
    }
    logs[m] = s;
  }
  return std::exp(exact + log_sum_exp(logs) - std::log(static_cast<double>(draws)));
}

/// E0(y | x) = E_prior[g^{-1}(x beta)]. The linear predictor is Normal under
/// the isotropic prior, so the logistic case is a 1-D integral.
inline double prior_predictive_E0_exact(std::span<const double> x, const PriorSpec& prior, VariableKind kind) {
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const double m = xv.dot(prior.beta_mean);
  if (kind == VariableKind::continuous) return m;
  const double sd = std::sqrt(prior.beta_var * xv.squaredNorm());
  if (sd == 0.0) return inv_logit(m);
  // Trapezoid rule against the standard normal density. The logistic has
  // poles at distance pi / sd from the real axis, so the step shrinks with sd
  // to keep the discretisation error near machine precision.
  const double h = std::min(0.25, M_PI / sd / 6.0);
  const int half = static_cast<int>(std::ceil(10.0 / h));
  double s = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double z = k * h;
    s += std::exp(-0.5 * z * z) * inv_logit(m + sd * z);
  }
  return s * h / std::sqrt(2.0 * M_PI);
}

inline double prior_predictive_E0(std::span<const double> x, const PriorSpec& prior, VariableKind kind, int draws,
                                  Rng& rng) {
  if (draws < 1) throw ValidationError("M0 must be >= 1");
  const auto d = static_cast<Eigen::Index>(x.size());
  const double sd = std::sqrt(prior.beta_var);
  double s = 0.0;
  for (int m = 0; m < draws; ++m) {
    double eta = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) eta += x[c] * (prior.beta_mean[c] + sd * rng.normal());
    s += outcome_mean_from_eta(eta, kind);
  }
  return s / draws;
}

}  // namespace edpci
