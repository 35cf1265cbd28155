#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>


#include "error.hpp"
#include "random.hpp"

namespace edpci {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double inv_logit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double log_inv_logit(double x) { return -log1p_exp(-x); }
inline double log1m_inv_logit(double x) { return -log1p_exp(x); }

inline double normal_logpdf(double x, double mean, double var) {
  const double z = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * z * z / var;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Location-scale Student t log density.
inline double student_t_logpdf(double x, double nu, double loc, double scale2) {
  const double z2 = (x - loc) * (x - loc) / scale2;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi * scale2) - 0.5 * (nu + 1.0) * std::log1p(z2 / nu);
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

/// Normalises log-weights in place into probabilities (max-subtraction).
/// Throws NumericalError when no weight is finite.
inline void normalize_log_weights(std::span<double> w) {
  double mx = kNegInf;
  for (double x : w) {
    if (std::isnan(x)) throw NumericalError("NaN log-weight");
    mx = std::max(mx, x);
  }
  if (!std::isfinite(mx)) throw NumericalError("all weights are zero or non-finite");
  double s = 0.0;
  for (double& x : w) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : w) x /= s;
}

/// Index drawn from unnormalised log-weights; `scratch` is overwritten.
inline int sample_log_categorical(std::span<const double> logw, std::vector<double>& scratch, Rng& rng) {
  scratch.assign(logw.begin(), logw.end());
  normalize_log_weights(scratch);
  double u = rng.uniform();
  const int last = static_cast<int>(scratch.size()) - 1;
  for (int t = 0; t < last; ++t) {
    u -= scratch[t];
    if (u < 0.0) return t;
  }
  // round-off: take the last index with positive mass
  for (int t = last; t >= 0; --t)
    if (scratch[t] > 0.0) return t;
  return last;
}

/// Index drawn from nonnegative (unnormalised) weights.
inline int sample_categorical(std::span<const double> w, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  double u = rng.uniform() * total;
  const int last = static_cast<int>(w.size()) - 1;
  for (int t = 0; t < last; ++t) {
    u -= w[t];
    if (u < 0.0) return t;
  }
  for (int t = last; t >= 0; --t)
    if (w[t] > 0.0) return t;
  return last;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample variance (n - 1 denominator).
inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Quantile with linear interpolation between order statistics
/// (h = (n - 1) p), the default rule of most statistics packages.
inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace edpci
