#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "hfgvar/error.hpp"
#include "hfgvar/factor_sv.hpp"
#include "hfgvar/irf.hpp"
#include "hfgvar/model_core.hpp"
#include "hfgvar/rng.hpp"

namespace hfgvar {

// Data-generating parameters for synthetic panels.
struct TruthRecord {
  ModelSpec spec;
  WeightMatrix weights;
  CoefficientState coefficients;
  Eigen::MatrixXd loadings;  // K x F
  std::vector<SvParams> factor_sv;
  std::vector<SvParams> idio_sv;
  std::vector<bool> constant_variance;
  int periods = 216;
  int discard = 50;
  std::string start_period = "1999-01";
};

struct SimulatedPanel {
  Eigen::MatrixXd y;  // periods x K, stacked order
  Eigen::MatrixXd factors;
  Eigen::MatrixXd factor_logvar;
  Eigen::MatrixXd idio_logvar;
};

inline double stacked_spectral_radius(const TruthRecord& truth) {
  const StackedSystem sys = assemble_stacked_system(truth.coefficients, truth.weights);
  return spectral_radius(companion_form(sys.lags));
}

// Forward simulation from zero initial conditions; the first `discard`
// periods are dropped.
inline SimulatedPanel simulate(const TruthRecord& truth, std::uint64_t seed) {
  const ModelSpec& s = truth.spec;
  require_valid(s);
  if (truth.loadings.rows() != s.K() || truth.loadings.cols() != s.n_factors ||
      static_cast<int>(truth.factor_sv.size()) != s.n_factors || static_cast<int>(truth.idio_sv.size()) != s.K()) {
    fail(ErrorKind::config, "truth record dimensions do not match the model spec");
  }
  for (const auto* ps : {&truth.factor_sv, &truth.idio_sv}) {
    for (const auto& p : *ps) {
      if (!(std::abs(p.persistence) < 1.0) || !(p.scale >= 0.0)) {
        fail(ErrorKind::config, "truth record: SV persistence must satisfy |phi| < 1 and scale >= 0");
      }
    }
  }
  const StackedSystem sys = assemble_stacked_system(truth.coefficients, truth.weights);
  const double radius = spectral_radius(companion_form(sys.lags));
  if (!(radius < 1.0)) {
    fail(ErrorKind::numerical, "truth dynamics are explosive (companion spectral radius " + std::to_string(radius) + ")");
  }

  Rng rng(seed);
  const int K = s.K();
  const int F = s.n_factors;
  const int total = truth.periods + truth.discard;
  const int lag = sys.order();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(total + lag, K);
  Eigen::MatrixXd f(total, F), hf(total, F), hi(total, K);

  auto evolve = [&](const SvParams& p, double prev, bool first, bool constant) {
    if (constant) return p.level;
    if (first) return p.level + p.scale / std::sqrt(1.0 - p.persistence * p.persistence) * rng.normal();
    return p.level + p.persistence * (prev - p.level) + p.scale * rng.normal();
  };
  for (int t = 0; t < total; ++t) {
    for (int i = 0; i < F; ++i) {
      hf(t, i) = evolve(truth.factor_sv[i], t > 0 ? hf(t - 1, i) : 0.0, t == 0, false);
      f(t, i) = std::exp(0.5 * hf(t, i)) * rng.normal();
    }
    Eigen::VectorXd eps = truth.loadings * f.row(t).transpose();
    for (int i = 0; i < K; ++i) {
      const bool constant = i < static_cast<int>(truth.constant_variance.size()) && truth.constant_variance[i];
      hi(t, i) = evolve(truth.idio_sv[i], t > 0 ? hi(t - 1, i) : 0.0, t == 0, constant);
      eps(i) += std::exp(0.5 * hi(t, i)) * rng.normal();
    }
    Eigen::VectorXd yt = sys.intercept + eps;
    for (int h = 1; h <= lag; ++h) yt += sys.lags[h - 1] * y.row(lag + t - h).transpose();
    y.row(lag + t) = yt.transpose();
  }
  SimulatedPanel out;
  out.y = y.bottomRows(truth.periods);
  out.factors = f.bottomRows(truth.periods);
  out.factor_logvar = hf.bottomRows(truth.periods);
  out.idio_logvar = hi.bottomRows(truth.periods);
  return out;
}

// Stable random truth for tests and demos. Country blocks share a common
// coefficient pattern plus small heterogeneity; dynamics are scaled until the
// companion spectral radius is below `max_radius`.
struct RandomTruthOptions {
  double own_lag = 0.4;
  double cross_scale = 0.08;
  double heterogeneity = 0.03;
  double intercept_scale = 0.1;
  double loading_scale = 0.6;
  double idio_level = std::log(0.5);
  double factor_level = 0.0;
  double persistence = 0.9;
  double sv_scale = 0.1;
  double max_radius = 0.9;
  int periods = 216;
  // The first 2m factors act as the labeled surprise shocks: surprise rows
  // load only on their own region's factors, with rate/stock signs +/- for
  // the policy shock and +/+ for the information shock. With k_tilde >= 4 the
  // first four aggregate rows (short rate and stocks, US then EA) follow the
  // same signs.
  bool compliant_identification = false;
  double surprise_noise_level = std::log(0.01);
};

inline void make_identification_compliant(TruthRecord& t, Rng& rng, const RandomTruthOptions& o) {
  const ModelSpec& s = t.spec;
  const int m = s.m_surprise;
  if (s.n_factors < 2 * m || m > 2) {
    fail(ErrorKind::config, "compliant truth needs m <= 2 and at least 2m factors");
  }
  // Sign of (row within region, shock within region): rate +/+, stock -/+.
  auto sign = [](int row, int shock) { return row == 1 && shock == 0 ? -1.0 : 1.0; };
  auto magnitude = [&] { return 0.8 + 0.4 * rng.uniform(); };
  t.loadings.topRows(s.n_surprises()).setZero();
  for (int region = 0; region < 2; ++region) {
    for (int row = 0; row < m; ++row) {
      for (int shock = 0; shock < m; ++shock) {
        const int col = region * m + shock;
        t.loadings(region * m + row, col) = sign(row, shock) * magnitude();
        if (s.k_aggregate_low_freq >= 4) t.loadings(s.n_surprises() + 2 * region + row, col) = sign(row, shock) * magnitude();
        if (s.k_aggregate_low_freq >= 4 && m == 1) {
          t.loadings(s.n_surprises() + 2 * region + 1, col) = sign(1, 0) * magnitude();
        }
      }
    }
  }
  if (s.k_aggregate_low_freq >= 4) {
    // Restricted aggregate rows carry no other-region surprise loading.
    for (int region = 0; region < 2; ++region) {
      for (int row = 0; row < 2; ++row) {
        t.loadings.block(s.n_surprises() + 2 * region + row, (1 - region) * m, 1, m).setZero();
      }
    }
  }
  for (int i = 0; i < s.n_surprises(); ++i) t.idio_sv[i].level = o.surprise_noise_level;
}

inline TruthRecord random_truth(const ModelSpec& spec, std::uint64_t seed, const RandomTruthOptions& o = {}) {
  require_valid(spec);
  Rng rng(seed);
  const int N = spec.n_countries, k = spec.k_country, l = spec.l();
  TruthRecord t;
  t.spec = spec;
  t.periods = o.periods;

  Eigen::MatrixXd w(N + 1, N);
  for (int i = 0; i <= N; ++i) {
    for (int j = 0; j < N; ++j) w(i, j) = 0.2 + rng.uniform();
  }
  if (N < 2) fail(ErrorKind::config, "random truth needs at least two countries for foreign weights");
  t.weights = WeightMatrix::normalized(w);

  CoefficientState c = CoefficientState::zeros(spec);
  for (int i = spec.n_surprises(); i < l; ++i) {
    c.alpha0()(i) = o.intercept_scale * rng.normal();
    for (int p = 1; p <= spec.lag_domestic; ++p) {
      for (int j = 0; j < l; ++j) c.A0(p)(i, j) = o.cross_scale * rng.normal() / p;
      c.A0(p)(i, i) += o.own_lag / (p * p);
    }
    for (int q = 1; q <= spec.lag_foreign; ++q) {
      for (int j = 0; j < k; ++j) c.B0(q)(i, j) = o.cross_scale * rng.normal() / q;
    }
  }
  Eigen::MatrixXd common = Eigen::MatrixXd::Zero(k, spec.country_regressors());
  for (Eigen::Index i = 0; i < common.size(); ++i) common.data()[i] = o.cross_scale * rng.normal();
  common.col(0) *= o.intercept_scale / std::max(o.cross_scale, 1e-12);
  for (int e = 0; e < k; ++e) {
    for (int p = 1; p <= spec.lag_domestic; ++p) common(e, 1 + (p - 1) * k + e) += o.own_lag / (p * p);
  }
  for (int j = 1; j <= N; ++j) {
    c.country[j - 1] = common;
    for (Eigen::Index i = 0; i < common.size(); ++i) c.country[j - 1].data()[i] += o.heterogeneity * rng.normal();
  }
  t.coefficients = c;
  for (int iter = 0; iter < 200 && stacked_spectral_radius(t) >= o.max_radius; ++iter) {
    // Shrink lag coefficients only; intercepts keep their scale.
    auto shrink = [](Eigen::MatrixXd& m) { m.rightCols(m.cols() - 1) *= 0.9; };
    shrink(t.coefficients.aggregate);
    for (auto& m : t.coefficients.country) shrink(m);
  }

  t.loadings.resize(spec.K(), spec.n_factors);
  for (Eigen::Index i = 0; i < t.loadings.size(); ++i) t.loadings.data()[i] = o.loading_scale * rng.normal();
  t.factor_sv.assign(spec.n_factors, SvParams{o.factor_level, o.persistence, o.sv_scale});
  t.idio_sv.assign(spec.K(), SvParams{o.idio_level, o.persistence, o.sv_scale});
  t.constant_variance.assign(spec.K(), false);
  for (int i = 0; i < spec.n_surprises(); ++i) t.constant_variance[i] = true;
  if (o.compliant_identification) make_identification_compliant(t, rng, o);
  return t;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) fail(ErrorKind::config, "ragged matrix in JSON");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

inline void to_json(nlohmann::json& j, const SvParams& p) {
  j = {{"level", p.level}, {"persistence", p.persistence}, {"scale", p.scale}};
}
inline void from_json(const nlohmann::json& j, SvParams& p) {
  p.level = j.at("level").get<double>();
  p.persistence = j.at("persistence").get<double>();
  p.scale = j.at("scale").get<double>();
}

inline nlohmann::json truth_to_json(const TruthRecord& t) {
  nlohmann::json countries = nlohmann::json::array();
  for (const auto& m : t.coefficients.country) countries.push_back(matrix_json(m));
  return {{"model", t.spec},
          {"weights", matrix_json(t.weights.matrix())},
          {"coefficients", {{"aggregate", matrix_json(t.coefficients.aggregate)}, {"countries", countries}}},
          {"loadings", matrix_json(t.loadings)},
          {"factor_sv", t.factor_sv},
          {"idiosyncratic_sv", t.idio_sv},
          {"constant_variance", t.constant_variance},
          {"periods", t.periods},
          {"discard", t.discard},
          {"start_period", t.start_period}};
}

inline TruthRecord truth_from_json(const nlohmann::json& j) {
  TruthRecord t;
  try {
    t.spec = j.at("model").get<ModelSpec>();
    require_valid(t.spec);
    t.weights = WeightMatrix(json_matrix(j.at("weights")));
    t.coefficients = CoefficientState::zeros(t.spec);
    t.coefficients.aggregate = json_matrix(j.at("coefficients").at("aggregate"));
    const auto& countries = j.at("coefficients").at("countries");
    if (static_cast<int>(countries.size()) != t.spec.n_countries) fail(ErrorKind::config, "truth: wrong number of country blocks");
    for (int c = 0; c < t.spec.n_countries; ++c) t.coefficients.country[c] = json_matrix(countries[c]);
    if (t.coefficients.aggregate.rows() != t.spec.l() || t.coefficients.aggregate.cols() != t.spec.aggregate_regressors()) {
      fail(ErrorKind::config, "truth: aggregate coefficient block has the wrong shape");
    }
    for (const auto& m : t.coefficients.country) {
      if (m.rows() != t.spec.k_country || m.cols() != t.spec.country_regressors()) {
        fail(ErrorKind::config, "truth: country coefficient block has the wrong shape");
      }
    }
    if (!respects_zero_mask(t.coefficients)) fail(ErrorKind::config, "truth: surprise equations must have zero coefficients");
    t.loadings = json_matrix(j.at("loadings"));
    t.factor_sv = j.at("factor_sv").get<std::vector<SvParams>>();
    t.idio_sv = j.at("idiosyncratic_sv").get<std::vector<SvParams>>();
    t.constant_variance = j.value("constant_variance", std::vector<bool>(t.spec.K(), false));
    t.periods = j.value("periods", t.periods);
    t.discard = j.value("discard", t.discard);
    t.start_period = j.value("start_period", t.start_period);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed truth record: ") + e.what());
  }
  return t;
}

}  // namespace hfgvar
