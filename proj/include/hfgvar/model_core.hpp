#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hfgvar/error.hpp"

namespace hfgvar {

// Layout of one multi-country system. The stacked vector is ordered
// (m_US, m_EA, y~_0, y_1, ..., y_N); the first l entries form the aggregate
// block y_0 whose first 2m entries are the surprise instruments.
struct ModelSpec {
  int n_countries = 1;               // N
  int k_country = 1;                 // k
  int m_surprise = 1;                // m, per region
  int k_aggregate_low_freq = 1;      // k~
  int lag_domestic = 1;              // P
  int lag_foreign = 1;               // Q
  int lag_aggregate_in_country = 1;  // R
  int n_factors = 1;                 // F
  int aggregate_size = 0;            // l = 2m + k~
  int system_size = 0;               // K = l + kN

  static ModelSpec make(int n, int k, int m, int k_tilde, int p, int q, int r, int f) {
    ModelSpec s;
    s.n_countries = n;
    s.k_country = k;
    s.m_surprise = m;
    s.k_aggregate_low_freq = k_tilde;
    s.lag_domestic = p;
    s.lag_foreign = q;
    s.lag_aggregate_in_country = r;
    s.n_factors = f;
    s.aggregate_size = 2 * m + k_tilde;
    s.system_size = s.aggregate_size + k * n;
    return s;
  }

  int l() const { return aggregate_size; }
  int K() const { return system_size; }
  int n_surprises() const { return 2 * m_surprise; }
  int max_lag() const { return std::max({lag_domestic, lag_foreign, lag_aggregate_in_country}); }

  // Stacked index of the first variable of country j (1-based, as in the model).
  int country_offset(int j) const { return aggregate_size + (j - 1) * k_country; }

  // Regressors per aggregate equation: [1, y_0 lags (l each), x_0 lags (k each)].
  int aggregate_regressors() const {
    return 1 + aggregate_size * lag_domestic + k_country * lag_foreign;
  }
  // Regressors per country equation: [1, y_j lags, x_j lags, y_0 lags].
  int country_regressors() const {
    return 1 + k_country * (lag_domestic + lag_foreign) + aggregate_size * lag_aggregate_in_country;
  }
  // Free aggregate coefficients (low-frequency rows only).
  int aggregate_coefficients() const { return k_aggregate_low_freq * aggregate_regressors(); }
  int country_coefficients() const { return k_country * country_regressors(); }

  bool operator==(const ModelSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"n_countries", s.n_countries},
                     {"k_country", s.k_country},
                     {"m_surprise", s.m_surprise},
                     {"k_aggregate_low_freq", s.k_aggregate_low_freq},
                     {"lag_domestic", s.lag_domestic},
                     {"lag_foreign", s.lag_foreign},
                     {"lag_aggregate_in_country", s.lag_aggregate_in_country},
                     {"n_factors", s.n_factors},
                     {"aggregate_size", s.aggregate_size},
                     {"system_size", s.system_size}};
}

// aggregate_size / system_size may be omitted and are then derived.
inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  s = ModelSpec::make(j.at("n_countries").get<int>(), j.at("k_country").get<int>(),
                      j.at("m_surprise").get<int>(), j.at("k_aggregate_low_freq").get<int>(),
                      j.at("lag_domestic").get<int>(), j.at("lag_foreign").get<int>(),
                      j.at("lag_aggregate_in_country").get<int>(), j.at("n_factors").get<int>());
  if (j.contains("aggregate_size")) s.aggregate_size = j.at("aggregate_size").get<int>();
  if (j.contains("system_size")) s.system_size = j.at("system_size").get<int>();
}

// Every violated invariant, not just the first.
inline std::vector<std::string> validate_spec(const ModelSpec& s) {
  std::vector<std::string> out;
  auto positive = [&](int v, const char* name) {
    if (v < 1) out.push_back(std::string(name) + " must be >= 1 (got " + std::to_string(v) + ")");
  };
  positive(s.n_countries, "n_countries");
  positive(s.k_country, "k_country");
  positive(s.m_surprise, "m_surprise");
  positive(s.k_aggregate_low_freq, "k_aggregate_low_freq");
  positive(s.lag_domestic, "lag_domestic");
  positive(s.lag_foreign, "lag_foreign");
  positive(s.lag_aggregate_in_country, "lag_aggregate_in_country");
  positive(s.n_factors, "n_factors");
  const int l = 2 * s.m_surprise + s.k_aggregate_low_freq;
  if (s.aggregate_size != l) {
    out.push_back("aggregate_size must equal l = 2m + k_aggregate_low_freq = " + std::to_string(l) +
                  " (got " + std::to_string(s.aggregate_size) + ")");
  }
  const int K = s.aggregate_size + s.k_country * s.n_countries;
  if (s.system_size != K) {
    out.push_back("system_size must equal K = l + k*N = " + std::to_string(K) + " (got " +
                  std::to_string(s.system_size) + ")");
  }
  if (s.n_factors > s.system_size) {
    out.push_back("factor count exceeds system size (F = " + std::to_string(s.n_factors) +
                  " > K = " + std::to_string(s.system_size) + ")");
  }
  return out;
}

inline void require_valid(const ModelSpec& s) {
  const auto diags = validate_spec(s);
  if (diags.empty()) return;
  std::string msg = "invalid model spec:";
  for (const auto& d : diags) msg += "\n  - " + d;
  fail(ErrorKind::config, msg);
}

// Row 0 holds the aggregate weights w_0j, rows 1..N the bilateral weights
// w_ij; columns are countries 1..N.
class WeightMatrix {
 public:
  static constexpr double kRowSumTol = 1e-12;

  WeightMatrix() = default;

  explicit WeightMatrix(Eigen::MatrixXd w) : w_(std::move(w)) {
    const auto problems = violations(w_);
    if (!problems.empty()) fail(ErrorKind::data, "invalid weight matrix: " + problems.front());
  }

  // Nonnegative shares, self-weight zeroed, rows rescaled to sum to one.
  static WeightMatrix normalized(Eigen::MatrixXd raw) {
    for (Eigen::Index i = 1; i < raw.rows(); ++i) {
      if (i - 1 < raw.cols()) raw(i, i - 1) = 0.0;
    }
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      if ((raw.row(i).array() < 0.0).any()) {
        fail(ErrorKind::data, "weight row " + std::to_string(i) + " has negative entries");
      }
      const double s = raw.row(i).sum();
      if (!(s > 0.0)) {
        fail(ErrorKind::data, "weight row " + std::to_string(i) + " is all zero; cannot normalize");
      }
      raw.row(i) /= s;
    }
    return WeightMatrix(std::move(raw));
  }

  static std::vector<std::string> violations(const Eigen::MatrixXd& w) {
    std::vector<std::string> out;
    if (w.rows() != w.cols() + 1) {
      out.push_back("expected (N+1) x N shape, got " + std::to_string(w.rows()) + " x " +
                    std::to_string(w.cols()));
      return out;
    }
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      if (!w.row(i).allFinite() || (w.row(i).array() < 0.0).any()) {
        out.push_back("row " + std::to_string(i) + " has negative or non-finite entries");
      }
      if (std::abs(w.row(i).sum() - 1.0) > kRowSumTol) {
        out.push_back("row " + std::to_string(i) + " sums to " + std::to_string(w.row(i).sum()));
      }
      if (i >= 1 && w(i, i - 1) != 0.0) {
        out.push_back("country " + std::to_string(i) + " has nonzero self-weight");
      }
    }
    return out;
  }

  int n_countries() const { return static_cast<int>(w_.cols()); }
  // w(i, j) with i in 0..N and j in 1..N.
  double operator()(int i, int j) const { return w_(i, j - 1); }
  const Eigen::MatrixXd& matrix() const { return w_; }

 private:
  Eigen::MatrixXd w_;
};

// x_it = sum_j w_ij y_jt for i = 0..N. `y` is T x K in stacked order; the
// result holds one T x k matrix per i.
inline std::vector<Eigen::MatrixXd> build_cross_section_averages(const ModelSpec& spec,
                                                                 const Eigen::MatrixXd& y,
                                                                 const WeightMatrix& w) {
  const int N = spec.n_countries;
  const int k = spec.k_country;
  if (w.n_countries() != N) {
    fail(ErrorKind::data, "weight matrix covers " + std::to_string(w.n_countries()) +
                              " countries but the model has " + std::to_string(N));
  }
  if (y.cols() != spec.K()) {
    const int have_countries = static_cast<int>((y.cols() - spec.l()) / std::max(k, 1));
    fail(ErrorKind::data, "panel has " + std::to_string(y.cols()) + " columns, expected K = " +
                              std::to_string(spec.K()) + "; country block " +
                              std::to_string(std::max(have_countries + 1, 1)) +
                              " is missing or malformed");
  }
  std::vector<Eigen::MatrixXd> x(N + 1, Eigen::MatrixXd::Zero(y.rows(), k));
  for (int i = 0; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) {
      const double wij = w(i, j);
      if (wij != 0.0) x[i] += wij * y.middleCols(spec.country_offset(j), k);
    }
  }
  return x;
}

// Structural zeros: the 2m surprise equations of the aggregate block carry no
// intercept and no lag coefficients.
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline BoolMatrix aggregate_zero_mask(const ModelSpec& spec) {
  BoolMatrix mask = BoolMatrix::Constant(spec.l(), spec.aggregate_regressors(), false);
  mask.topRows(spec.n_surprises()).setConstant(true);
  return mask;
}

// All VAR coefficients. Each block stores one row per equation:
//   aggregate  (l x J0): [alpha_0 | A_01 .. A_0P | B_01 .. B_0Q]
//   country[j] (k x J):  [alpha_j | A_j1 .. A_jP | B_j1 .. B_jQ | C_j1 .. C_jR]
struct CoefficientState {
  ModelSpec spec;
  Eigen::MatrixXd aggregate;
  std::vector<Eigen::MatrixXd> country;

  static CoefficientState zeros(const ModelSpec& s) {
    CoefficientState c;
    c.spec = s;
    c.aggregate = Eigen::MatrixXd::Zero(s.l(), s.aggregate_regressors());
    c.country.assign(s.n_countries, Eigen::MatrixXd::Zero(s.k_country, s.country_regressors()));
    return c;
  }

  auto alpha0() { return aggregate.col(0); }
  auto alpha0() const { return aggregate.col(0); }
  auto A0(int p) { return aggregate.middleCols(1 + (p - 1) * spec.l(), spec.l()); }
  auto A0(int p) const { return aggregate.middleCols(1 + (p - 1) * spec.l(), spec.l()); }
  auto B0(int q) {
    return aggregate.middleCols(1 + spec.l() * spec.lag_domestic + (q - 1) * spec.k_country,
                                spec.k_country);
  }
  auto B0(int q) const {
    return aggregate.middleCols(1 + spec.l() * spec.lag_domestic + (q - 1) * spec.k_country,
                                spec.k_country);
  }

  // Country blocks, j = 1..N.
  auto alpha(int j) { return country[j - 1].col(0); }
  auto alpha(int j) const { return country[j - 1].col(0); }
  auto A(int j, int p) { return country[j - 1].middleCols(1 + (p - 1) * spec.k_country, spec.k_country); }
  auto A(int j, int p) const {
    return country[j - 1].middleCols(1 + (p - 1) * spec.k_country, spec.k_country);
  }
  auto B(int j, int q) {
    return country[j - 1].middleCols(1 + spec.k_country * (spec.lag_domestic + q - 1), spec.k_country);
  }
  auto B(int j, int q) const {
    return country[j - 1].middleCols(1 + spec.k_country * (spec.lag_domestic + q - 1), spec.k_country);
  }
  auto C(int j, int r) {
    return country[j - 1].middleCols(
        1 + spec.k_country * (spec.lag_domestic + spec.lag_foreign) + (r - 1) * spec.l(), spec.l());
  }
  auto C(int j, int r) const {
    return country[j - 1].middleCols(
        1 + spec.k_country * (spec.lag_domestic + spec.lag_foreign) + (r - 1) * spec.l(), spec.l());
  }

  // a_0: low-frequency aggregate rows, row-major. Length = aggregate_coefficients().
  Eigen::VectorXd aggregate_vector() const {
    const Eigen::MatrixXd rows = aggregate.bottomRows(spec.k_aggregate_low_freq).transpose();
    return Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
  }
  // a_j, row-major. Length = country_coefficients().
  Eigen::VectorXd country_vector(int j) const {
    const Eigen::MatrixXd rows = country[j - 1].transpose();
    return Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
  }

  CoefficientState& operator+=(const CoefficientState& o) {
    aggregate += o.aggregate;
    for (std::size_t j = 0; j < country.size(); ++j) country[j] += o.country[j];
    return *this;
  }
  CoefficientState& operator*=(double s) {
    aggregate *= s;
    for (auto& c : country) c *= s;
    return *this;
  }
};

inline bool respects_zero_mask(const CoefficientState& c) {
  return (c.aggregate.topRows(c.spec.n_surprises()).array() == 0.0).all();
}

// y_t = c + sum_h G_h y_{t-h} + eps_t, with every lag matrix padded to
// max(P, Q, R).
struct StackedSystem {
  Eigen::VectorXd intercept;
  std::vector<Eigen::MatrixXd> lags;

  int size() const { return static_cast<int>(intercept.size()); }
  int order() const { return static_cast<int>(lags.size()); }
};

inline StackedSystem assemble_stacked_system(const CoefficientState& c, const WeightMatrix& w) {
  const ModelSpec& s = c.spec;
  if (const auto problems = WeightMatrix::violations(w.matrix()); !problems.empty()) {
    fail(ErrorKind::data, "cannot assemble stacked system: weight matrix " + problems.front());
  }
  if (w.n_countries() != s.n_countries) {
    fail(ErrorKind::data, "weight matrix size does not match n_countries");
  }
  if (!respects_zero_mask(c)) {
    fail(ErrorKind::numerical, "coefficient state violates the structural zero mask");
  }
  const int K = s.K();
  const int l = s.l();
  const int k = s.k_country;
  const int N = s.n_countries;

  // Linear maps from the stacked vector to y_0, y_j and x_i.
  Eigen::MatrixXd S0 = Eigen::MatrixXd::Zero(l, K);
  S0.leftCols(l).setIdentity();
  std::vector<Eigen::MatrixXd> Sj(N + 1), W(N + 1, Eigen::MatrixXd::Zero(k, K));
  for (int j = 1; j <= N; ++j) {
    Sj[j] = Eigen::MatrixXd::Zero(k, K);
    Sj[j].middleCols(s.country_offset(j), k).setIdentity();
  }
  for (int i = 0; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) W[i] += w(i, j) * Sj[j];
  }

  StackedSystem sys;
  sys.intercept = Eigen::VectorXd::Zero(K);
  sys.lags.assign(s.max_lag(), Eigen::MatrixXd::Zero(K, K));
  sys.intercept.head(l) = c.alpha0();
  for (int p = 1; p <= s.lag_domestic; ++p) sys.lags[p - 1].topRows(l) += c.A0(p) * S0;
  for (int q = 1; q <= s.lag_foreign; ++q) sys.lags[q - 1].topRows(l) += c.B0(q) * W[0];
  for (int j = 1; j <= N; ++j) {
    const int off = s.country_offset(j);
    sys.intercept.segment(off, k) = c.alpha(j);
    for (int p = 1; p <= s.lag_domestic; ++p) sys.lags[p - 1].middleRows(off, k) += c.A(j, p) * Sj[j];
    for (int q = 1; q <= s.lag_foreign; ++q) sys.lags[q - 1].middleRows(off, k) += c.B(j, q) * W[j];
    for (int r = 1; r <= s.lag_aggregate_in_country; ++r) {
      sys.lags[r - 1].middleRows(off, k) += c.C(j, r) * S0;
    }
  }
  return sys;
}

// Regressor matrices for the equation-by-equation sampler, built once per
// panel. Rows are periods max_lag .. T-1 of the input.
struct RegressionDesign {
  ModelSpec spec;
  Eigen::MatrixXd y;                     // T_eff x K responses
  Eigen::MatrixXd aggregate;             // T_eff x J0
  std::vector<Eigen::MatrixXd> country;  // N x (T_eff x J)

  int periods() const { return static_cast<int>(y.rows()); }
};

inline RegressionDesign build_design(const ModelSpec& spec, const Eigen::MatrixXd& y,
                                     const WeightMatrix& w) {
  const auto x = build_cross_section_averages(spec, y, w);
  const int lag = spec.max_lag();
  const int T = static_cast<int>(y.rows()) - lag;
  if (T < 2) {
    fail(ErrorKind::data, "panel has " + std::to_string(y.rows()) + " periods; need more than max lag " +
                              std::to_string(lag) + " + 1");
  }
  const int l = spec.l();
  const int k = spec.k_country;

  RegressionDesign d;
  d.spec = spec;
  d.y = y.bottomRows(T);
  d.aggregate.resize(T, spec.aggregate_regressors());
  d.aggregate.col(0).setOnes();
  for (int p = 1; p <= spec.lag_domestic; ++p) {
    d.aggregate.middleCols(1 + (p - 1) * l, l) = y.block(lag - p, 0, T, l);
  }
  for (int q = 1; q <= spec.lag_foreign; ++q) {
    d.aggregate.middleCols(1 + l * spec.lag_domestic + (q - 1) * k, k) = x[0].middleRows(lag - q, T);
  }
  d.country.resize(spec.n_countries);
  for (int j = 1; j <= spec.n_countries; ++j) {
    Eigen::MatrixXd& Z = d.country[j - 1];
    Z.resize(T, spec.country_regressors());
    Z.col(0).setOnes();
    const int off = spec.country_offset(j);
    int col = 1;
    for (int p = 1; p <= spec.lag_domestic; ++p, col += k) Z.middleCols(col, k) = y.block(lag - p, off, T, k);
    for (int q = 1; q <= spec.lag_foreign; ++q, col += k) Z.middleCols(col, k) = x[j].middleRows(lag - q, T);
    for (int r = 1; r <= spec.lag_aggregate_in_country; ++r, col += l) {
      Z.middleCols(col, l) = y.block(lag - r, 0, T, l);
    }
  }
  return d;
}

// Conditional mean of every equation given the coefficients (T_eff x K).
inline Eigen::MatrixXd fitted_values(const RegressionDesign& d, const CoefficientState& c) {
  const ModelSpec& s = d.spec;
  Eigen::MatrixXd out(d.periods(), s.K());
  out.leftCols(s.l()).noalias() = d.aggregate * c.aggregate.transpose();
  for (int j = 1; j <= s.n_countries; ++j) {
    out.middleCols(s.country_offset(j), s.k_country).noalias() =
        d.country[j - 1] * c.country[j - 1].transpose();
  }
  return out;
}

}  // namespace hfgvar
