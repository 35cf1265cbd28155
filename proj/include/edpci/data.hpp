#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace edpci {

enum class VariableKind { binary, continuous };

inline std::string to_string(VariableKind k) { return k == VariableKind::binary ? "binary" : "continuous"; }

inline VariableKind parse_variable_kind(std::string_view s) {
  if (s == "binary") return VariableKind::binary;
  if (s == "continuous") return VariableKind::continuous;
  throw ValidationError("unknown variable kind '" + std::string(s) + "' (expected binary or continuous)");
}

struct CovariateSpec {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  bool operator==(const CovariateSpec&) const = default;
};

/// Column roles and types. Covariates are always ordered binary-first; that
/// order is used by every downstream component.
struct VariableSchema {
  std::string outcome_name = "Y";
  VariableKind outcome_kind = VariableKind::binary;
  std::string treatment_name = "A";
  int treatment_levels = 2;
  std::vector<CovariateSpec> covariates;

  static VariableSchema make(VariableKind outcome_kind, int treatment_levels,
                             const std::vector<std::string>& binary_names,
                             const std::vector<std::string>& continuous_names,
                             std::string outcome_name = "Y", std::string treatment_name = "A") {
    VariableSchema s;
    s.outcome_name = std::move(outcome_name);
    s.outcome_kind = outcome_kind;
    s.treatment_name = std::move(treatment_name);
    s.treatment_levels = treatment_levels;
    for (const auto& n : binary_names) s.covariates.push_back({n, VariableKind::binary});
    for (const auto& n : continuous_names) s.covariates.push_back({n, VariableKind::continuous});
    s.validate();
    return s;
  }

  int num_binary() const {
    return static_cast<int>(std::count_if(covariates.begin(), covariates.end(),
                                          [](const auto& c) { return c.kind == VariableKind::binary; }));
  }
  int num_continuous() const { return num_covariates() - num_binary(); }
  int num_covariates() const { return static_cast<int>(covariates.size()); }

  int covariate_index(std::string_view name) const {
    for (int r = 0; r < num_covariates(); ++r)
      if (covariates[r].name == name) return r;
    return -1;
  }

  void validate() const {
    if (treatment_levels < 2) throw ValidationError("treatment_levels must be >= 2");
    std::set<std::string> names{outcome_name, treatment_name};
    if (names.size() != 2) throw ValidationError("outcome and treatment names must differ");
    bool seen_continuous = false;
    for (const auto& c : covariates) {
      if (c.name.empty()) throw ValidationError("empty covariate name");
      if (!names.insert(c.name).second) throw ValidationError("duplicate column name '" + c.name + "'");
      if (c.kind == VariableKind::continuous) seen_continuous = true;
      if (c.kind == VariableKind::binary && seen_continuous)
        throw ValidationError("binary covariates must precede continuous covariates");
    }
  }

  bool operator==(const VariableSchema&) const = default;
};

/// Observed data. Missing covariate cells hold NaN and are flagged in `missing`.
struct Dataset {
  VariableSchema schema;
  Eigen::VectorXd y;
  std::vector<int> a;
  Eigen::MatrixXd l;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> missing;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(l.cols()); }
  bool has_missing() const { return missing.size() > 0 && missing.any(); }
  int missing_count() const { return static_cast<int>(missing.count()); }

  static Dataset empty_like(const VariableSchema& schema, int n) {
    Dataset d;
    d.schema = schema;
    d.y = Eigen::VectorXd::Zero(n);
    d.a.assign(n, 0);
    d.l = Eigen::MatrixXd::Zero(n, schema.num_covariates());
    d.missing = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, schema.num_covariates(), false);
    return d;
  }

  void validate() const {
    schema.validate();
    const int n_ = n();
    if (static_cast<int>(a.size()) != n_ || l.rows() != n_ || missing.rows() != n_)
      throw ValidationError("inconsistent row counts");
    if (l.cols() != schema.num_covariates() || missing.cols() != schema.num_covariates())
      throw ValidationError("covariate matrix does not match schema");
    for (int i = 0; i < n_; ++i) {
      if (!std::isfinite(y(i))) throw ValidationError("outcome missing or non-finite at row " + std::to_string(i + 1));
      if (schema.outcome_kind == VariableKind::binary && y(i) != 0.0 && y(i) != 1.0)
        throw ValidationError("outcome '" + schema.outcome_name + "' must be 0/1 (row " + std::to_string(i + 1) + ")");
      if (a[i] < 0 || a[i] >= schema.treatment_levels)
        throw ValidationError("treatment '" + schema.treatment_name + "' out of range at row " +
                              std::to_string(i + 1));
      for (int r = 0; r < p(); ++r) {
        const double v = l(i, r);
        if (missing(i, r)) {
          if (!std::isnan(v)) throw ValidationError("masked cell holds a value");
          continue;
        }
        if (!std::isfinite(v))
          throw ValidationError("non-finite value in column '" + schema.covariates[r].name + "'");
        if (schema.covariates[r].kind == VariableKind::binary && v != 0.0 && v != 1.0)
          throw ValidationError("binary column '" + schema.covariates[r].name + "' contains value " +
                                std::to_string(v) + " at row " + std::to_string(i + 1));
      }
    }
  }
};

inline bool operator==(const Dataset& x, const Dataset& y) {
  if (!(x.schema == y.schema) || x.n() != y.n() || x.p() != y.p()) return false;
  if (x.y != y.y || x.a != y.a) return false;
  if ((x.missing != y.missing).any()) return false;
  for (int i = 0; i < x.n(); ++i)
    for (int r = 0; r < x.p(); ++r)
      if (!x.missing(i, r) && x.l(i, r) != y.l(i, r)) return false;
  return true;
}

/// Per-continuous-covariate centring and scaling, plus the outcome scale for
/// continuous outcomes (identity for binary outcomes).
struct ScalingParams {
  std::vector<double> center;  // one per continuous covariate, schema order
  std::vector<double> scale;
  double outcome_center = 0.0;
  double outcome_scale = 1.0;

  bool operator==(const ScalingParams&) const = default;

  double to_standard(int continuous_index, double v) const {
    return (v - center[continuous_index]) / scale[continuous_index];
  }
  double from_standard(int continuous_index, double z) const {
    return z * scale[continuous_index] + center[continuous_index];
  }
  double outcome_to_standard(double y) const { return (y - outcome_center) / outcome_scale; }
  double outcome_from_standard(double z) const { return z * outcome_scale + outcome_center; }
};

inline std::pair<double, double> observed_mean_sd(const Dataset& d, int col) {
  double s = 0.0;
  int m = 0;
  for (int i = 0; i < d.n(); ++i)
    if (!d.missing(i, col)) {
      s += d.l(i, col);
      ++m;
    }
  if (m < 2)
    throw ValidationError("continuous column '" + d.schema.covariates[col].name +
                          "' needs at least two observed values");
  const double mu = s / m;
  double ss = 0.0;
  for (int i = 0; i < d.n(); ++i)
    if (!d.missing(i, col)) ss += (d.l(i, col) - mu) * (d.l(i, col) - mu);
  return {mu, std::sqrt(ss / (m - 1))};
}

/// Z-scores the continuous covariates over observed entries. When the outcome
/// is continuous and `include_outcome` is set it is z-scored as well.
inline std::pair<Dataset, ScalingParams> standardize_continuous(const Dataset& d, bool include_outcome = true) {
  Dataset out = d;
  ScalingParams sp;
  const int p1 = d.schema.num_binary();
  for (int c = p1; c < d.p(); ++c) {
    auto [mu, sd] = observed_mean_sd(d, c);
    if (!(sd > 0.0)) throw DegenerateColumnError("column '" + d.schema.covariates[c].name + "' has zero variance");
    sp.center.push_back(mu);
    sp.scale.push_back(sd);
    for (int i = 0; i < d.n(); ++i)
      if (!d.missing(i, c)) out.l(i, c) = (d.l(i, c) - mu) / sd;
  }
  if (include_outcome && d.schema.outcome_kind == VariableKind::continuous && d.n() >= 2) {
    const double mu = d.y.mean();
    const double sd = std::sqrt((d.y.array() - mu).square().sum() / (d.n() - 1));
    if (!(sd > 0.0)) throw DegenerateColumnError("outcome has zero variance");
    sp.outcome_center = mu;
    sp.outcome_scale = sd;
    out.y = (d.y.array() - mu) / sd;
  }
  return {std::move(out), std::move(sp)};
}

inline Dataset unstandardize(const Dataset& d, const ScalingParams& sp) {
  Dataset out = d;
  const int p1 = d.schema.num_binary();
  for (int c = p1; c < d.p(); ++c)
    for (int i = 0; i < d.n(); ++i)
      if (!d.missing(i, c)) out.l(i, c) = sp.from_standard(c - p1, d.l(i, c));
  out.y = d.y.array() * sp.outcome_scale + sp.outcome_center;
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Reads a CSV with a header row. Columns are matched to the schema by name
/// (extra columns are ignored); an empty covariate cell becomes missing.
inline Dataset load_dataset_stream(std::istream& in, const VariableSchema& schema) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: missing header row", 0);
  const auto header = detail::split_csv(line);
  std::map<std::string, int, std::less<>> col;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) col.emplace(std::string(header[c]), c);
  auto find = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ParseError("header lacks column '" + name + "'", 0);
    return it->second;
  };
  const int yc = find(schema.outcome_name);
  const int ac = find(schema.treatment_name);
  std::vector<int> lc;
  for (const auto& c : schema.covariates) lc.push_back(find(c.name));

  std::vector<double> ys;
  std::vector<int> as;
  std::vector<std::vector<double>> rows;
  int row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(f.size()),
                       row);
    double yv, av;
    if (f[yc].empty()) throw ValidationError("row " + std::to_string(row) + ": outcome is missing");
    if (f[ac].empty()) throw ValidationError("row " + std::to_string(row) + ": treatment is missing");
    if (!detail::parse_double(f[yc], yv) || !detail::parse_double(f[ac], av))
      throw ParseError("row " + std::to_string(row) + ": non-numeric outcome or treatment", row);
    if (av != std::floor(av))
      throw ValidationError("row " + std::to_string(row) + ": treatment must be an integer code");
    std::vector<double> lv(lc.size());
    for (std::size_t r = 0; r < lc.size(); ++r) {
      const auto cell = f[lc[r]];
      if (cell.empty()) {
        lv[r] = std::numeric_limits<double>::quiet_NaN();
      } else if (!detail::parse_double(cell, lv[r])) {
        throw ParseError("row " + std::to_string(row) + ": non-numeric value in column '" +
                             schema.covariates[r].name + "'",
                         row);
      }
    }
    ys.push_back(yv);
    as.push_back(static_cast<int>(av));
    rows.push_back(std::move(lv));
  }
  Dataset d = Dataset::empty_like(schema, row);
  for (int i = 0; i < row; ++i) {
    d.y(i) = ys[i];
    d.a[i] = as[i];
    for (int r = 0; r < schema.num_covariates(); ++r) {
      d.l(i, r) = rows[i][r];
      d.missing(i, r) = std::isnan(rows[i][r]);
    }
  }
  d.validate();
  return d;
}

inline Dataset load_dataset(const std::string& path, const VariableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return load_dataset_stream(in, schema);
}

inline void save_dataset_stream(std::ostream& out, const Dataset& d) {
  out << d.schema.outcome_name << ',' << d.schema.treatment_name;
  for (const auto& c : d.schema.covariates) out << ',' << c.name;
  out << '\n';
  for (int i = 0; i < d.n(); ++i) {
    out << detail::format_double(d.y(i)) << ',' << d.a[i];
    for (int r = 0; r < d.p(); ++r) {
      out << ',';
      if (!d.missing(i, r)) out << detail::format_double(d.l(i, r));
    }
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  save_dataset_stream(out, d);
}

}  // namespace edpci
