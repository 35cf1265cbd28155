#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "edpci/sampler.hpp"
#include "edpci/simulation.hpp"
#include "test_support.hpp"

using namespace edpci;
using namespace testing_support;

namespace {

// Plain-arithmetic kernels for the oracles below.
double lin_pred(const std::vector<double>& x, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) s += x[c] * b[c];
  return s;
}

double outcome_density(double y, const std::vector<double>& x, const OutcomeParams& th, VariableKind kind) {
  const double eta = lin_pred(x, th.beta);
  if (kind == VariableKind::binary) return y > 0.5 ? expit(eta) : 1.0 - expit(eta);
  return normal_pdf(y, eta, *th.sigma2);
}

double covariate_density(int a, const std::vector<double>& l, const CovariateParams& w, const ModelDims& dims) {
  double p = w.treatment_probs[a];
  for (int r = 0; r < dims.p1; ++r) p *= l[r] > 0.5 ? w.pi[r] : 1.0 - w.pi[r];
  for (int c = 0; c < dims.p2; ++c) p *= normal_pdf(l[dims.p1 + c], w.mu[c], w.tau2[c]);
  return p;
}

ModelData make_data(const ModelDims& dims, int n, Rng& rng) {
  ModelData d;
  d.dims = dims;
  d.n = n;
  d.y.resize(n);
  d.a.resize(n);
  d.cov = RowMatrix::Zero(n, dims.p());
  d.design = RowMatrix::Zero(n, dims.design_dim());
  for (int i = 0; i < n; ++i) {
    d.a[i] = rng.uniform_int(dims.q);
    for (int r = 0; r < dims.p1; ++r) d.cov(i, r) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    for (int c = 0; c < dims.p2; ++c) d.cov(i, dims.p1 + c) = rng.normal();
    d.y[i] = dims.outcome == VariableKind::binary ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
    d.refresh_design_row(i);
  }
  return d;
}

/// Random nested partition drawn from a Chinese-restaurant process, with
/// prior parameters for every occupied (sub)cluster.
ClusterState random_state(int n, const ModelDims& dims, const PriorSpec& prior, Rng& rng, double a_theta = 1.0,
                          double a_omega = 1.0) {
  ClusterState st;
  st.sy.resize(n);
  st.sx.resize(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> w;
    for (const auto& c : st.clusters) w.push_back(c.size);
    w.push_back(a_theta);
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform() * tot;
    int j = 0;
    while (j + 1 < static_cast<int>(w.size()) && u >= w[j]) u -= w[j++];
    if (j == st.k()) {
      YCluster cl;
      sample_prior_outcome(prior, dims, rng, cl.theta);
      st.clusters.push_back(std::move(cl));
    }
    auto& cl = st.clusters[j];
    std::vector<double> v;
    for (const auto& s : cl.subs) v.push_back(s.size);
    v.push_back(a_omega);
    const double vt = std::accumulate(v.begin(), v.end(), 0.0);
    double z = rng.uniform() * vt;
    int l = 0;
    while (l + 1 < static_cast<int>(v.size()) && z >= v[l]) z -= v[l++];
    if (l == static_cast<int>(cl.subs.size())) {
      SubCluster s;
      sample_prior_covariate(prior, dims, rng, s.omega);
      cl.subs.push_back(std::move(s));
    }
    ++cl.size;
    ++cl.subs[l].size;
    st.sy[i] = j;
    st.sx[i] = l;
  }
  return st;
}

std::vector<double> normalized(const std::vector<double>& logw) {
  const double mx = *std::max_element(logw.begin(), logw.end());
  std::vector<double> p;
  for (double v : logw) p.push_back(std::exp(v - mx));
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> row_vec(const RowMatrix& m, int i) {
  return std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols());
}

/// Total variation between a histogram of draws and a density known up to a
/// constant, using `bins` equal-width bins on [0, hi] plus an overflow bin.
double tv_against_density(const std::vector<double>& draws, const std::function<double(double)>& log_density, double hi,
                          int bins) {
  const int fine = 200;
  std::vector<double> mass(bins + 1, 0.0);
  const double h = hi / bins;
  for (int b = 0; b < bins; ++b)
    mass[b] = simpson([&](double x) { return x > 0 ? std::exp(log_density(x)) : 0.0; }, b * h + 1e-12, (b + 1) * h,
                      fine);
  mass[bins] = simpson([&](double x) { return std::exp(log_density(x)); }, hi, 50.0 * hi, 20000);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  std::vector<double> freq(bins + 1, 0.0);
  for (double v : draws) freq[std::min(bins, static_cast<int>(v / h))] += 1.0;
  double tv = 0.0;
  for (int b = 0; b <= bins; ++b) tv += std::abs(freq[b] / draws.size() - mass[b] / total);
  return 0.5 * tv;
}

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

// ---------------------------------------------------------------------------
// relabel_and_augment

TEST(Relabel, RemovingOnlySubjectLeavesAuxiliaryClustersOnly) {
  const ModelDims dims{VariableKind::binary, 2, 1, 1};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(1);
  ClusterState st = random_state(1, dims, prior, rng);
  const auto old_beta = st.clusters[0].theta.beta;
  auto table = relabel_and_augment(0, st, prior, dims, 5, rng);
  EXPECT_EQ(st.k(), 0);
  EXPECT_TRUE(table.aux_sub.empty());
  ASSERT_EQ(table.aux_theta.size(), 5u);
  EXPECT_EQ(table.aux_omega.size(), 5u);
  EXPECT_EQ(table.aux_theta[0].beta, old_beta);  // the vacated cluster seeds slot 0
  EXPECT_EQ(table.size(), 5);
}

TEST(Relabel, SharedSubclusterOnlyDecrements) {
  const ModelDims dims{VariableKind::binary, 2, 1, 0};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(2);
  ClusterState st;
  st.sy = {0, 0, 0};
  st.sx = {0, 0, 1};
  YCluster cl;
  cl.size = 3;
  sample_prior_outcome(prior, dims, rng, cl.theta);
  cl.subs.resize(2);
  cl.subs[0].size = 2;
  cl.subs[1].size = 1;
  for (auto& s : cl.subs) sample_prior_covariate(prior, dims, rng, s.omega);
  st.clusters.push_back(cl);
  const auto omega0 = st.clusters[0].subs[0].omega.pi;
  auto table = relabel_and_augment(1, st, prior, dims, 3, rng);
  EXPECT_EQ(st.k(), 1);
  EXPECT_EQ(st.clusters[0].size, 2);
  EXPECT_EQ(st.clusters[0].subs[0].size, 1);
  EXPECT_EQ(st.clusters[0].subs[1].size, 1);
  EXPECT_EQ(st.clusters[0].subs[0].omega.pi, omega0);
  EXPECT_EQ(st.sy[1], -1);
  ASSERT_EQ(table.aux_sub.size(), 1u);
  EXPECT_EQ(table.aux_sub[0].size(), 3u);
}

TEST(Relabel, RandomStatesKeepBookkeeping) {
  const ModelDims dims{VariableKind::continuous, 3, 2, 1};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(3);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + rng.uniform_int(12);
    const int m = 1 + rng.uniform_int(4);
    ModelData data = make_data(dims, n, rng);
    ClusterState st = random_state(n, dims, prior, rng, 0.5 + 2.0 * rng.uniform(), 0.5 + 2.0 * rng.uniform());
    ASSERT_NO_THROW(st.check_invariants());
    const int i = rng.uniform_int(n);
    const int j = st.sy[i], l = st.sx[i];
    const bool alone_y = st.clusters[j].size == 1;
    const bool alone_x = !alone_y && st.clusters[j].subs[l].size == 1;
    const auto theta = st.clusters[j].theta.beta;
    const auto omega = st.clusters[j].subs[l].omega.treatment_probs;
    const int k_before = st.k();

    auto table = relabel_and_augment(i, st, prior, dims, m, rng);
    EXPECT_EQ(st.k(), k_before - (alone_y ? 1 : 0));
    int total = 0;
    std::vector<std::vector<int>> counts(st.k());
    for (int c = 0; c < st.k(); ++c) counts[c].assign(st.clusters[c].subs.size(), 0);
    for (int t = 0; t < n; ++t) {
      if (t == i) continue;
      ASSERT_GE(st.sy[t], 0);
      ASSERT_LT(st.sy[t], st.k());
      ASSERT_LT(st.sx[t], static_cast<int>(st.clusters[st.sy[t]].subs.size()));
      ++counts[st.sy[t]][st.sx[t]];
    }
    for (int c = 0; c < st.k(); ++c) {
      int sub_total = 0;
      for (std::size_t s = 0; s < st.clusters[c].subs.size(); ++s) {
        EXPECT_GT(st.clusters[c].subs[s].size, 0);
        EXPECT_EQ(st.clusters[c].subs[s].size, counts[c][s]);
        sub_total += st.clusters[c].subs[s].size;
      }
      EXPECT_EQ(sub_total, st.clusters[c].size);
      total += st.clusters[c].size;
      ASSERT_EQ(table.aux_sub[c].size(), static_cast<std::size_t>(m));
    }
    EXPECT_EQ(total, n - 1);
    ASSERT_EQ(table.aux_theta.size(), static_cast<std::size_t>(m));
    if (alone_y) {
      EXPECT_EQ(table.aux_theta[0].beta, theta);
      EXPECT_EQ(table.aux_omega[0].treatment_probs, omega);
    }
    if (alone_x) {
      EXPECT_EQ(table.aux_sub[j][0].treatment_probs, omega);
    }

    std::vector<double> logw;
    membership_log_weights(i, st, table, data, HyperState{1.3, 0.7}, m, logw);
    int slots = m;
    for (const auto& c : st.clusters) slots += static_cast<int>(c.subs.size()) + m;
    EXPECT_EQ(static_cast<int>(logw.size()), slots);

    assign_membership(i, rng.uniform_int(slots), st, table, m);
    ASSERT_NO_THROW(st.check_invariants());
  }
}

// ---------------------------------------------------------------------------
// membership update

TEST(Membership, MatchesBruteForceEnumeration) {
  for (auto kind : {VariableKind::binary, VariableKind::continuous}) {
    const ModelDims dims{kind, 2, 1, 1};
    const PriorSpec prior = PriorSpec::defaults(dims);
    Rng rng(kind == VariableKind::binary ? 4 : 5);
    int checked = 0;
    while (checked < 200) {
      const int n = 2 + rng.uniform_int(5);
      ModelData data = make_data(dims, n, rng);
      ClusterState st = random_state(n, dims, prior, rng);
      const int i = rng.uniform_int(n);
      const HyperState hyper{0.2 + 3.0 * rng.uniform(), 0.2 + 3.0 * rng.uniform()};
      auto table = relabel_and_augment(i, st, prior, dims, 1, rng);
      bool small = st.k() <= 2;
      for (const auto& c : st.clusters) small = small && c.subs.size() <= 2;
      if (!small) continue;
      ++checked;
      std::vector<double> logw;
      membership_log_weights(i, st, table, data, hyper, 1, logw);
      const auto got = normalized(logw);

      // Enumerate the urn formula directly, in linear space.
      const auto x = row_vec(data.design, i);
      const auto l = row_vec(data.cov, i);
      const int a = data.a[i];
      const double y = data.y[i];
      std::vector<double> w;
      for (int j = 0; j < st.k(); ++j) {
        const auto& c = st.clusters[j];
        const double nj = c.size;
        const double ky = outcome_density(y, x, c.theta, kind);
        for (const auto& s : c.subs)
          w.push_back(nj * s.size / (nj + hyper.alpha_omega) * ky * covariate_density(a, l, s.omega, dims));
        w.push_back(nj * hyper.alpha_omega / (nj + hyper.alpha_omega) * ky *
                    covariate_density(a, l, table.aux_sub[j][0], dims));
      }
      w.push_back(hyper.alpha_theta * outcome_density(y, x, table.aux_theta[0], kind) *
                  covariate_density(a, l, table.aux_omega[0], dims));
      const double b = std::accumulate(w.begin(), w.end(), 0.0);
      ASSERT_EQ(got.size(), w.size());
      for (std::size_t t = 0; t < w.size(); ++t) EXPECT_NEAR(got[t], w[t] / b, 1e-12);
    }
  }
}

TEST(Membership, VanishingConcentrationsJoinExistingCluster) {
  const ModelDims dims{VariableKind::binary, 2, 1, 0};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(6);
  ModelData data = make_data(dims, 4, rng);
  ClusterState st = random_state(4, dims, prior, rng, 1e-9, 1e-9);
  ASSERT_EQ(st.k(), 1);
  ASSERT_EQ(st.clusters[0].subs.size(), 1u);
  auto table = relabel_and_augment(2, st, prior, dims, 5, rng);
  std::vector<double> logw;
  membership_log_weights(2, st, table, data, HyperState{1e-300, 1e-300}, 5, logw);
  EXPECT_NEAR(normalized(logw)[0], 1.0, 1e-12);
}

TEST(Membership, IdenticalSubclustersSplitEvenly) {
  const ModelDims dims{VariableKind::binary, 2, 1, 1};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(7);
  ModelData data = make_data(dims, 5, rng);
  ClusterState base;
  base.sy = {0, 0, 0, 0, 0};
  base.sx = {0, 0, 1, 1, 0};
  YCluster cl;
  cl.size = 5;
  sample_prior_outcome(prior, dims, rng, cl.theta);
  SubCluster s;
  sample_prior_covariate(prior, dims, rng, s.omega);
  s.size = 3;
  cl.subs = {s, s};
  cl.subs[1].size = 2;
  base.clusters.push_back(cl);
  int first = 0;
  const int N = 10000;
  ProposalTable table;
  std::vector<double> logw, scratch;
  for (int t = 0; t < N; ++t) {
    ClusterState st = base;
    relabel_and_augment(4, st, prior, dims, 5, rng, table);
    update_cluster_membership(4, st, table, data, HyperState{1e-300, 1e-300}, 5, rng, logw, scratch);
    ASSERT_EQ(st.k(), 1);
    if (st.sx[4] == 0) ++first;
  }
  const double e = N / 2.0;
  const double chi2 = 2.0 * (first - e) * (first - e) / e;
  EXPECT_LT(chi2, 6.635);  // chi-square(1) at 0.01
}

TEST(Membership, CorruptParametersRaiseUnderflow) {
  const ModelDims dims{VariableKind::binary, 2, 1, 0};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(8);
  ModelData data = make_data(dims, 3, rng);
  ClusterState st = random_state(3, dims, prior, rng);
  auto table = relabel_and_augment(0, st, prior, dims, 2, rng);
  for (auto& c : st.clusters) c.theta.beta.setConstant(std::nan(""));
  for (auto& t : table.aux_theta) t.beta.setConstant(std::nan(""));
  std::vector<double> logw, scratch;
  EXPECT_THROW(update_cluster_membership(0, st, table, data, HyperState{1.0, 1.0}, 2, rng, logw, scratch),
               NumericalError);
}

// ---------------------------------------------------------------------------
// parameter refresh

TEST(UpdateAllParams, ClusterOrderDoesNotChangeDraws) {
  // Two y-clusters with disjoint members; listing them in either order must
  // give the same law for each cluster's refreshed coefficients.
  const ModelDims dims{VariableKind::binary, 2, 0, 1};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng gen(9);
  ModelData data = make_data(dims, 12, gen);
  ClusterState base = random_state(12, dims, prior, gen, 1e-9, 1e-9);
  base.clusters.push_back(base.clusters[0]);
  base.clusters[0].size = base.clusters[0].subs[0].size = 5;
  base.clusters[1].size = base.clusters[1].subs[0].size = 7;
  for (int i = 0; i < 12; ++i) base.sy[i] = i < 5 ? 0 : 1;
  ClusterState swapped = base;
  std::swap(swapped.clusters[0], swapped.clusters[1]);
  for (auto& s : swapped.sy) s = 1 - s;
  ASSERT_NO_THROW(base.check_invariants());
  ASSERT_NO_THROW(swapped.check_invariants());

  std::vector<double> b1, b2;
  MetropolisTuning tuning;
  Rng rng(10);
  for (int t = 0; t < 4000; ++t) {
    ClusterState s1 = base, s2 = swapped;
    update_all_params(s1, data, prior, tuning, rng);
    update_all_params(s2, data, prior, tuning, rng);
    b1.push_back(s1.clusters[0].theta.beta[2] + s1.clusters[0].subs[0].omega.mu[0]);
    b2.push_back(s2.clusters[1].theta.beta[2] + s2.clusters[1].subs[0].omega.mu[0]);
  }
  EXPECT_LT(std::abs(avg(b1) - avg(b2)), 4.0 * std::hypot(se(b1), se(b2)));
  EXPECT_NEAR(var(b1) / var(b2), 1.0, 0.12);
}

TEST(UpdateAllParams, EmptyClusterIsRejected) {
  const ModelDims dims{VariableKind::binary, 2, 1, 0};
  const PriorSpec prior = PriorSpec::defaults(dims);
  Rng rng(11);
  ModelData data = make_data(dims, 4, rng);
  ClusterState st = random_state(4, dims, prior, rng);
  YCluster empty;
  sample_prior_outcome(prior, dims, rng, empty.theta);
  empty.subs.push_back(SubCluster{});
  st.clusters.push_back(empty);
  MetropolisTuning tuning;
  EXPECT_THROW(update_all_params(st, data, prior, tuning, rng), Error);
}

// ---------------------------------------------------------------------------
// concentration updates

TEST(AlphaTheta, OddsFormula) {
  PriorSpec prior;
  prior.alpha_shape = 1.0;
  prior.alpha_rate = 2.0;
  const double eta = 0.3;
  EXPECT_NEAR(alpha_theta_mixture_odds(1, 40, eta, prior), 1.0 / (40.0 * (2.0 - std::log(eta))), 1e-15);
}

TEST(AlphaTheta, RecursionMatchesStationaryTarget) {
  PriorSpec prior;
  const int k = 3, n = 50;
  // p(alpha | k, n) is proportional to p(alpha) alpha^(k-1) (alpha + n) B(alpha + 1, n).
  auto logp = [&](double a) {
    return (prior.alpha_shape - 1.0) * std::log(a) - prior.alpha_rate * a + (k - 1.0) * std::log(a) +
           std::log(a + n) + log_beta_fn(a + 1.0, n);
  };
  Rng rng(12);
  double alpha = 1.0;
  std::vector<double> draws;
  for (int t = 0; t < 400000; ++t) {
    alpha = update_alpha_theta(k, n, alpha, prior, rng);
    if (t >= 1000) draws.push_back(alpha);
  }
  EXPECT_LT(tv_against_density(draws, logp, 4.0, 20), 0.02);
}

TEST(AlphaTheta, DominatingPriorCollapsesToZero) {
  PriorSpec prior;
  prior.alpha_rate = 1e9;
  Rng rng(13);
  double alpha = 1.0;
  for (int t = 0; t < 100; ++t) {
    alpha = update_alpha_theta(2, 100, alpha, prior, rng);
    EXPECT_GT(alpha, 0.0);
  }
  EXPECT_LT(alpha, 1e-6);
}

namespace {
ClusterState sized_state(const std::vector<std::vector<int>>& sizes) {
  ClusterState st;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    YCluster c;
    for (std::size_t l = 0; l < sizes[j].size(); ++l) {
      c.subs.push_back(SubCluster{sizes[j][l], {}});
      c.size += sizes[j][l];
      for (int t = 0; t < sizes[j][l]; ++t) {
        st.sy.push_back(static_cast<int>(j));
        st.sx.push_back(static_cast<int>(l));
      }
    }
    st.clusters.push_back(c);
  }
  return st;
}
}  // namespace

TEST(AlphaOmega, MetropolisMatchesGrid) {
  PriorSpec prior;
  for (const auto& sizes : {std::vector<std::vector<int>>{{30}}, std::vector<std::vector<int>>{{6, 4}, {12, 5, 3}}}) {
    const ClusterState st = sized_state(sizes);
    auto logp = [&](double a) {
      double s = (prior.alpha_shape - 1.0) * std::log(a) - prior.alpha_rate * a;
      for (const auto& c : st.clusters)
        s += (c.subs.size() - 1.0) * std::log(a) + std::log(a + c.size) + log_beta_fn(a + 1.0, c.size);
      return s;
    };
    Rng rng(14);
    double alpha = 1.0;
    std::vector<double> draws;
    for (int t = 0; t < 400000; ++t) {
      alpha = update_alpha_omega(st, alpha, prior, 0.8, rng);
      if (t >= 1000) draws.push_back(alpha);
    }
    EXPECT_LT(tv_against_density(draws, logp, 6.0, 20), 0.02);
  }
}

TEST(AlphaOmega, ZeroProposalScaleRejected) {
  PriorSpec prior;
  Rng rng(15);
  const ClusterState st = sized_state({{3}});
  EXPECT_THROW(update_alpha_omega(st, 1.0, prior, 0.0, rng), ValidationError);
  SamplerConfig cfg;
  cfg.alpha_omega_step = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(AlphaOmega, LogTargetFiniteOverWideRange) {
  PriorSpec prior;
  const ModelDims dims{VariableKind::binary, 2, 1, 0};
  const PriorSpec p0 = PriorSpec::defaults(dims);
  Rng rng(16);
  for (int rep = 0; rep < 200; ++rep) {
    const ClusterState st = random_state(1 + rng.uniform_int(300), dims, p0, rng, 3.0 * rng.uniform() + 0.1,
                                         3.0 * rng.uniform() + 0.1);
    for (double e = -8.0; e <= 8.0; e += 0.5) EXPECT_TRUE(std::isfinite(alpha_omega_log_target(std::pow(10.0, e), st, prior)));
  }
}

// ---------------------------------------------------------------------------
// missing-covariate augmentation

namespace {
struct SingleSubject {
  ModelDims dims;
  ModelData data;
  ClusterState st;
};

SingleSubject single_subject(VariableKind outcome, Rng& rng) {
  SingleSubject s;
  s.dims = ModelDims{outcome, 2, 2, 2};
  const PriorSpec prior = PriorSpec::defaults(s.dims);
  s.data = make_data(s.dims, 1, rng);
  s.st = random_state(1, s.dims, prior, rng);
  return s;
}
}  // namespace

TEST(ImputeBinary, MatchesTwoPointEnumeration) {
  Rng rng(17);
  for (int rep = 0; rep < 500; ++rep) {
    auto kind = rep % 2 ? VariableKind::binary : VariableKind::continuous;
    auto s = single_subject(kind, rng);
    const int r = rng.uniform_int(2);
    const auto& cl = s.st.clusters[0];
    const auto& w = cl.subs[0].omega;
    auto x = row_vec(s.data.design, 0);
    x[s.dims.covariate_offset() + r] = 1.0;
    const double p1 = w.pi[r] * outcome_density(s.data.y[0], x, cl.theta, kind);
    x[s.dims.covariate_offset() + r] = 0.0;
    const double p0 = (1.0 - w.pi[r]) * outcome_density(s.data.y[0], x, cl.theta, kind);
    EXPECT_NEAR(binary_imputation_probability(0, r, s.st, s.data), p1 / (p1 + p0), 1e-12);
  }
}

TEST(ImputeBinary, OutcomeIndependenceAndCertainty) {
  Rng rng(18);
  auto s = single_subject(VariableKind::binary, rng);
  auto& cl = s.st.clusters[0];
  cl.theta.beta[s.dims.covariate_offset() + 1] = 0.0;
  EXPECT_NEAR(binary_imputation_probability(0, 1, s.st, s.data), cl.subs[0].omega.pi[1], 1e-15);
  cl.subs[0].omega.pi[1] = 1.0;
  cl.subs[0].omega.refresh();
  EXPECT_EQ(binary_imputation_probability(0, 1, s.st, s.data), 1.0);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(impute_missing_binary(0, 1, s.st, s.data, rng), 1);
  EXPECT_EQ(s.data.design(0, s.dims.covariate_offset() + 1), 1.0);
}

TEST(ImputeContinuous, PriorOnlyTargetWhenCoefficientIsZero) {
  Rng rng(19);
  auto s = single_subject(VariableKind::binary, rng);
  const int r = 3;  // second continuous covariate
  auto& cl = s.st.clusters[0];
  cl.theta.beta[s.dims.covariate_offset() + r] = 0.0;
  auto& w = cl.subs[0].omega;
  w.mu[1] = 0.7;
  w.tau2[1] = 2.5;
  w.refresh();
  std::vector<double> v, v2;
  for (int t = 0; t < 200000; ++t) {
    const double x = impute_missing_continuous(0, r, s.st, s.data, rng);
    v.push_back(x);
    v2.push_back(x * x);
  }
  EXPECT_NEAR(avg(v), 0.7, 3.0 * batch_se(v));
  EXPECT_NEAR(avg(v2), 2.5 + 0.49, 3.0 * batch_se(v2));
}

TEST(ImputeContinuous, ConjugateLinearOutcome) {
  Rng rng(20);
  auto s = single_subject(VariableKind::continuous, rng);
  const int r = 2;
  auto& cl = s.st.clusters[0];
  const double b = 1.3, sigma2 = 0.6, mu = -0.4, tau2 = 1.7;
  cl.theta.beta[s.dims.covariate_offset() + r] = b;
  cl.theta.sigma2 = sigma2;
  auto& w = cl.subs[0].omega;
  w.mu[0] = mu;
  w.tau2[0] = tau2;
  w.refresh();
  auto x = row_vec(s.data.design, 0);
  x[s.dims.covariate_offset() + r] = 0.0;
  const double rest = lin_pred(x, cl.theta.beta);
  const double y = s.data.y[0];
  const double prec = 1.0 / tau2 + b * b / sigma2;
  const double mean = (mu / tau2 + b * (y - rest) / sigma2) / prec;
  std::vector<double> v, v2;
  for (int t = 0; t < 200000; ++t) {
    const double z = impute_missing_continuous(0, r, s.st, s.data, rng);
    v.push_back(z);
    v2.push_back((z - mean) * (z - mean));
  }
  EXPECT_NEAR(avg(v), mean, 3.0 * batch_se(v));
  EXPECT_NEAR(avg(v2), 1.0 / prec, 3.0 * batch_se(v2));
}

TEST(ImputeContinuous, AcceptanceRateOnFuzzedStates) {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    auto s = single_subject(VariableKind::binary, rng);
    int acc = 0;
    for (int t = 0; t < 2000; ++t) {
      bool a = false;
      impute_missing_continuous(0, 2 + rng.uniform_int(2), s.st, s.data, rng, &a);
      acc += a;
    }
    const double rate = acc / 2000.0;
    EXPECT_GT(rate, 0.1);
    EXPECT_LT(rate, 0.9);
  }
}

// ---------------------------------------------------------------------------
// whole chains

namespace {
Dataset small_dataset(VariableKind outcome, int n, double missing_rate, Rng& rng) {
  auto schema = VariableSchema::make(outcome, 2, {"B1"}, {"C1", "C2"});
  Dataset d = Dataset::empty_like(schema, n);
  for (int i = 0; i < n; ++i) {
    d.l(i, 0) = rng.bernoulli(0.3);
    d.l(i, 1) = rng.normal();
    d.l(i, 2) = rng.normal(2.0, 3.0);
    d.a[i] = rng.bernoulli(expit(0.5 * d.l(i, 1)));
    const double eta = -0.5 + 0.8 * d.a[i] + 0.6 * d.l(i, 0) - 0.4 * d.l(i, 1) + (d.l(i, 1) > 0.5 ? 1.0 : 0.0);
    d.y(i) = outcome == VariableKind::binary ? rng.bernoulli(expit(eta)) : eta + rng.normal(0.0, 0.7);
    for (int r = 0; r < 3; ++r)
      if (rng.uniform() < missing_rate) {
        d.l(i, r) = std::nan("");
        d.missing(i, r) = true;
      }
  }
  return d;
}

bool same_states(const std::vector<RetainedState>& a, const std::vector<RetainedState>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const auto &x = a[t], &y = b[t];
    if (x.chain != y.chain || x.iteration != y.iteration || x.clusters.sy != y.clusters.sy ||
        x.clusters.sx != y.clusters.sx || x.hyper.alpha_theta != y.hyper.alpha_theta ||
        x.hyper.alpha_omega != y.hyper.alpha_omega || x.imputed != y.imputed || x.clusters.k() != y.clusters.k())
      return false;
    for (int j = 0; j < x.clusters.k(); ++j) {
      if (x.clusters.clusters[j].theta.beta != y.clusters.clusters[j].theta.beta) return false;
      if (x.clusters.clusters[j].theta.sigma2 != y.clusters.clusters[j].theta.sigma2) return false;
      for (std::size_t l = 0; l < x.clusters.clusters[j].subs.size(); ++l)
        if (x.clusters.clusters[j].subs[l].omega.mu != y.clusters.clusters[j].subs[l].omega.mu) return false;
    }
  }
  return true;
}
}  // namespace

TEST(RunChain, RetainedCountFollowsThinning) {
  Rng rng(22);
  const ModelData data = ModelData::from(standardize_continuous(small_dataset(VariableKind::binary, 30, 0.0, rng)).first);
  const PriorSpec prior = PriorSpec::defaults(data.dims);
  SamplerConfig cfg;
  cfg.iterations = 11;
  cfg.burn_in = 10;
  EXPECT_EQ(run_chain(data, cfg, prior, Rng(1)).size(), 1u);
  cfg.iterations = 37;
  cfg.burn_in = 7;
  cfg.thin = 4;
  EXPECT_EQ(static_cast<int>(run_chain(data, cfg, prior, Rng(1)).size()), cfg.retained());
  EXPECT_EQ(cfg.retained(), 7);
}

TEST(RunChain, InvalidConfigurationsRejected) {
  SamplerConfig cfg;
  cfg.iterations = 10;
  cfg.burn_in = 10;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.burn_in = 2;
  cfg.aux = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.aux = 1;
  cfg.thin = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(RunChain, SameSeedIsBitwiseIdenticalAcrossWorkerCounts) {
  Rng rng(23);
  const Dataset d = small_dataset(VariableKind::continuous, 40, 0.15, rng);
  SamplerConfig cfg;
  cfg.iterations = 60;
  cfg.burn_in = 20;
  cfg.chains = 3;
  cfg.seed = 99;
  const auto prior = PriorSpec::defaults(ModelDims::from(d.schema));
  const auto a = fit_edp(d, cfg, prior, 1);
  const auto b = fit_edp(d, cfg, prior, 3);
  EXPECT_TRUE(same_states(a.states, b.states));
  cfg.seed = 100;
  const auto c = fit_edp(d, cfg, prior, 1);
  EXPECT_FALSE(same_states(a.states, c.states));
}

TEST(RunChain, AugmentationWithoutMissingCellsIsNoOp) {
  Rng rng(24);
  const ModelData data = ModelData::from(standardize_continuous(small_dataset(VariableKind::binary, 40, 0.0, rng)).first);
  const PriorSpec prior = PriorSpec::defaults(data.dims);
  SamplerConfig cfg;
  cfg.iterations = 40;
  cfg.burn_in = 10;
  cfg.impute = true;
  const auto a = run_chain(data, cfg, prior, Rng(5));
  cfg.impute = false;
  const auto b = run_chain(data, cfg, prior, Rng(5));
  EXPECT_TRUE(same_states(a, b));
}

TEST(RunChain, InvariantsHoldAfterEverySweep) {
  Rng rng(25);
  for (auto kind : {VariableKind::binary, VariableKind::continuous}) {
    const ModelData data = ModelData::from(standardize_continuous(small_dataset(kind, 60, 0.2, rng)).first);
    SamplerConfig cfg;
    cfg.iterations = 80;
    cfg.burn_in = 10;
    cfg.init_single_cluster = kind == VariableKind::binary;
    Chain chain(data, PriorSpec::defaults(data.dims), cfg, Rng(7));
    chain.initialize();
    for (int t = 0; t < cfg.iterations; ++t) {
      chain.sweep();
      ASSERT_NO_THROW(chain.state().check_invariants());
      ASSERT_GT(chain.hyper().alpha_theta, 0.0);
      ASSERT_GT(chain.hyper().alpha_omega, 0.0);
      for (auto [i, r] : chain.data().missing_cells) {
        ASSERT_TRUE(std::isfinite(chain.data().cov(i, r)));
        ASSERT_EQ(chain.data().design(i, data.dims.covariate_offset() + r), chain.data().cov(i, r));
        if (r < data.dims.p1) {
          ASSERT_TRUE(chain.data().cov(i, r) == 0.0 || chain.data().cov(i, r) == 1.0);
        }
      }
    }
  }
}

TEST(RunChain, VanishingConcentrationsReduceToParametricRegression) {
  // Standalone semi-conjugate Gibbs sampler for a single Normal linear model,
  // written against Eigen and std::mt19937_64 only.
  Rng rng(26);
  const Dataset raw = small_dataset(VariableKind::continuous, 80, 0.0, rng);
  const ModelData data = ModelData::from(raw);
  const PriorSpec prior = PriorSpec::defaults(data.dims);
  const int d = data.dims.design_dim();
  const int iters = 20000, burn = 1000;

  SamplerConfig cfg;
  cfg.iterations = iters;
  cfg.burn_in = burn;
  cfg.update_alpha = false;
  cfg.initial_alpha_theta = 1e-12;
  cfg.initial_alpha_omega = 1e-12;
  const auto states = run_chain(data, cfg, prior, Rng(3));
  std::vector<std::vector<double>> edp(d);
  for (const auto& s : states) {
    ASSERT_EQ(s.clusters.k(), 1);
    for (int c = 0; c < d; ++c) edp[c].push_back(s.clusters.clusters[0].theta.beta[c]);
  }

  Eigen::MatrixXd X(data.n, d);
  Eigen::VectorXd y(data.n);
  for (int i = 0; i < data.n; ++i) {
    X.row(i) = data.design.row(i);
    y[i] = data.y[i];
  }
  std::mt19937_64 eng(4);
  std::normal_distribution<double> nd;
  double s2 = 1.0;
  std::vector<std::vector<double>> ref(d);
  for (int t = 0; t < iters; ++t) {
    Eigen::MatrixXd P = X.transpose() * X / s2 + Eigen::MatrixXd::Identity(d, d) / prior.beta_var;
    Eigen::VectorXd rhs = X.transpose() * y / s2;
    Eigen::MatrixXd cov = P.inverse();
    Eigen::LLT<Eigen::MatrixXd> L(cov);
    Eigen::VectorXd z(d);
    for (int c = 0; c < d; ++c) z[c] = nd(eng);
    Eigen::VectorXd beta = cov * rhs + L.matrixL() * z;
    const double rss = (y - X * beta).squaredNorm();
    std::chi_squared_distribution<double> chi(prior.outcome_nu + data.n);
    s2 = (prior.outcome_nu * prior.outcome_scale2 + rss) / chi(eng);
    if (t >= burn)
      for (int c = 0; c < d; ++c) ref[c].push_back(beta[c]);
  }
  for (int c = 0; c < d; ++c)
    EXPECT_NEAR(avg(edp[c]), avg(ref[c]), 3.0 * std::hypot(batch_se(edp[c]), batch_se(ref[c]))) << "coefficient " << c;
}

TEST(RunChain, PermutingSubjectsLeavesSummariesUnchanged) {
  Rng rng(27);
  const Dataset raw = small_dataset(VariableKind::binary, 40, 0.0, rng);
  const ModelData data = ModelData::from(standardize_continuous(raw).first);
  ModelData perm = data;
  std::vector<int> order(data.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (int i = 0; i < data.n; ++i) {
    perm.y[i] = data.y[order[i]];
    perm.a[i] = data.a[order[i]];
    perm.cov.row(i) = data.cov.row(order[i]);
    perm.design.row(i) = data.design.row(order[i]);
  }
  const PriorSpec prior = PriorSpec::defaults(data.dims);
  SamplerConfig cfg;
  cfg.iterations = 200;
  cfg.burn_in = 50;
  std::vector<double> s1, s2;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto* target : {&s1, &s2}) {
      const auto st = run_chain(target == &s1 ? data : perm, cfg, prior, Rng::derive(seed, {target == &s1 ? 1u : 2u}));
      double k = 0.0;
      for (const auto& s : st) k += s.clusters.k() + 0.1 * s.hyper.alpha_theta;
      target->push_back(k / st.size());
    }
  }
  // Two-sample KS at the 1% level: D_crit = 1.628 sqrt(2 / 20).
  std::sort(s1.begin(), s1.end());
  std::sort(s2.begin(), s2.end());
  double dmax = 0.0;
  for (double v : s1) {
    const double f1 = std::upper_bound(s1.begin(), s1.end(), v) - s1.begin();
    const double f2 = std::upper_bound(s2.begin(), s2.end(), v) - s2.begin();
    dmax = std::max(dmax, std::abs(f1 - f2) / 20.0);
  }
  for (double v : s2) {
    const double f1 = std::upper_bound(s1.begin(), s1.end(), v) - s1.begin();
    const double f2 = std::upper_bound(s2.begin(), s2.end(), v) - s2.begin();
    dmax = std::max(dmax, std::abs(f1 - f2) / 20.0);
  }
  EXPECT_LT(dmax, 1.628 * std::sqrt(2.0 / 20.0));
}

// ---------------------------------------------------------------------------
// Getting it right: alternate Gibbs sweeps with regeneration of the data and
// compare against independent forward draws from the joint model.

namespace {
void regenerate_data(const ClusterState& st, ModelData& data, Rng& rng) {
  const auto& dims = data.dims;
  for (int i = 0; i < data.n; ++i) {
    const auto& cl = st.clusters[st.sy[i]];
    const auto& w = cl.subs[st.sx[i]].omega;
    data.a[i] = rng.uniform() < w.treatment_probs[1] ? 1 : 0;
    for (int r = 0; r < dims.p1; ++r) data.cov(i, r) = rng.uniform() < w.pi[r] ? 1.0 : 0.0;
    for (int c = 0; c < dims.p2; ++c) data.cov(i, dims.p1 + c) = rng.normal(w.mu[c], std::sqrt(w.tau2[c]));
    data.refresh_design_row(i);
    const double eta = linear_predictor(data.design.row(i).data(), cl.theta);
    data.y[i] = rng.uniform() < inv_logit(eta) ? 1.0 : 0.0;
  }
}

std::vector<double> joint_stats(const ClusterState& st, const HyperState& h, const ModelData& data) {
  const auto& c0 = st.clusters[st.sy[0]];
  const auto& w0 = c0.subs[st.sx[0]].omega;
  int subs = 0;
  for (const auto& c : st.clusters) subs += static_cast<int>(c.subs.size());
  double ybar = 0.0;
  for (double v : data.y) ybar += v;
  return {static_cast<double>(st.k()),
          static_cast<double>(subs),
          h.alpha_theta,
          h.alpha_omega,
          c0.theta.beta[0],
          c0.theta.beta[3],
          c0.theta.beta[0] * c0.theta.beta[0],
          w0.pi[0],
          w0.treatment_probs[1],
          ybar / data.n};
}
}  // namespace

TEST(Geweke, GibbsPathMatchesForwardSimulation) {
  const ModelDims dims{VariableKind::binary, 2, 1, 1};
  const PriorSpec prior = PriorSpec::defaults(dims);
  const int n = 10, m = 2;
  const char* names[] = {"k", "subclusters", "alpha_theta", "alpha_omega", "beta0", "beta3", "beta0^2", "pi", "p_treat",
                         "ybar"};
  const int S = 10;

  // Forward: hyperparameters, nested CRP partition, parameters, data.
  Rng fwd(31);
  std::vector<std::vector<double>> forward(S);
  ModelData data = make_data(dims, n, fwd);
  for (int t = 0; t < 10000; ++t) {
    const HyperState h{fwd.gamma(prior.alpha_shape, prior.alpha_rate), fwd.gamma(prior.alpha_shape, prior.alpha_rate)};
    const ClusterState st = random_state(n, dims, prior, fwd, h.alpha_theta, h.alpha_omega);
    regenerate_data(st, data, fwd);
    const auto s = joint_stats(st, h, data);
    for (int c = 0; c < S; ++c) forward[c].push_back(s[c]);
  }

  // Gibbs path.
  Rng init(32);
  SamplerConfig cfg;
  cfg.aux = m;
  cfg.adapt = false;
  cfg.impute = false;
  cfg.burn_in = 0;
  cfg.iterations = 1;
  Chain chain(data, prior, cfg, Rng(33));
  HyperState h{init.gamma(1.0, 1.0), init.gamma(1.0, 1.0)};
  chain.mutable_hyper() = h;
  chain.mutable_state() = random_state(n, dims, prior, init, h.alpha_theta, h.alpha_omega);
  regenerate_data(chain.state(), chain.mutable_data(), init);
  std::vector<std::vector<double>> gibbs(S);
  for (int t = 0; t < 60000; ++t) {
    chain.sweep();
    regenerate_data(chain.state(), chain.mutable_data(), chain.rng());
    if (t < 1000) continue;
    const auto s = joint_stats(chain.state(), chain.hyper(), chain.data());
    for (int c = 0; c < S; ++c) gibbs[c].push_back(s[c]);
  }
  for (int c = 0; c < S; ++c) {
    const double z = (avg(forward[c]) - avg(gibbs[c])) / std::hypot(se(forward[c]), batch_se(gibbs[c]));
    EXPECT_LT(std::abs(z), 4.0) << names[c] << ": forward " << avg(forward[c]) << " vs gibbs " << avg(gibbs[c]);
  }
}

TEST(RunChain, SingleComponentDataSettleOnOneCluster) {
  Rng rng(41);
  const auto [data, truth] = generate_scenario(ScenarioSpec{1, 1000, 41, false}, rng);
  SamplerConfig cfg;
  cfg.iterations = 700;
  cfg.burn_in = 200;
  cfg.seed = 41;
  const auto draws = fit_edp(data, cfg, PriorSpec::defaults(ModelDims::from(data.schema)));
  int ones = 0;
  for (const auto& s : draws.states) ones += s.clusters.k() == 1;
  EXPECT_GE(ones, 0.8 * draws.states.size()) << "k = 1 in " << ones << " of " << draws.states.size();
}

TEST(RunChain, SeparatedDataFallBackToPriorModeRidge) {
  Dataset d = Dataset::empty_like(VariableSchema::make(VariableKind::binary, 2, {}, {"C"}), 20);
  for (int i = 0; i < 20; ++i) {
    d.a[i] = i % 2;
    d.l(i, 0) = i;
    d.y[i] = i >= 10 ? 1.0 : 0.0;
  }
  const auto sd = standardize_continuous(d).first;
  ASSERT_THROW(fit_reference_glm(sd), ConvergenceError);
  SamplerConfig cfg;
  cfg.iterations = 20;
  cfg.burn_in = 10;
  PriorSpec base;
  base.beta_var = 2.0;
  const auto post = fit_edp(d, cfg, base);
  EXPECT_EQ(post.config.reference_ridge, 0.5);
  const Eigen::VectorXd expect = fit_reference_glm(sd, 0.5).beta;
  EXPECT_LT((post.prior.beta_mean - expect).cwiseAbs().maxCoeff(), 1e-12);
  // An explicit ridge is honoured as given.
  cfg.reference_ridge = 3.0;
  EXPECT_EQ(fit_edp(d, cfg, base).config.reference_ridge, 3.0);
}
