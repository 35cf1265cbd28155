#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace edpci {

/// Random stream injected into every stochastic routine.
///
/// Sub-streams are derived from a root seed plus integer keys such as
/// (chain, replicate, iteration, purpose), so results never depend on
/// scheduling order.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 20240101u) : engine_(seed) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (keys.size() + 1));
    auto push = [&](std::uint64_t v) {
      words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
      words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto k : keys) push(k);
    std::seed_seq seq(words.begin(), words.end());
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  engine_type& engine() { return engine_; }

  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  /// Uniform on (0, 1); safe to pass to log().
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  /// Gamma with shape/rate parameterisation.
  double gamma(double shape, double rate) {
    if (shape == 1.0) return -std::log(uniform_open()) / rate;
    std::gamma_distribution<double> g(shape, 1.0);
    return g(engine_) / rate;
  }

  double beta(double a, double b) {
    if (a == 1.0 && b == 1.0) return uniform_open();
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double chi_square(double nu) { return 2.0 * gamma(0.5 * nu, 1.0); }

  /// Scaled inverse chi-square(nu, s2): nu * s2 / chi2_nu.
  double scaled_inv_chi_square(double nu, double s2) { return nu * s2 / chi_square(nu); }

  bool bernoulli(double p) { return uniform() < p; }

  int uniform_int(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(engine_);
  }

  /// Symmetric or general Dirichlet draw written into `out`.
  void dirichlet(const std::vector<double>& alpha, std::vector<double>& out) {
    out.resize(alpha.size());
    double total = 0.0;
    for (std::size_t t = 0; t < alpha.size(); ++t) {
      out[t] = gamma(alpha[t], 1.0);
      total += out[t];
    }
    for (auto& v : out) v /= total;
  }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace edpci
