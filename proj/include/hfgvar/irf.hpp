#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hfgvar/data_ingest.hpp"
#include "hfgvar/error.hpp"
#include "hfgvar/model_core.hpp"

namespace hfgvar {

// (K h) x (K h): top block row [G_1 ... G_h], identity blocks below the diagonal.
inline Eigen::MatrixXd companion_form(const std::vector<Eigen::MatrixXd>& lags) {
  if (lags.empty()) fail(ErrorKind::numerical, "companion form needs at least one lag matrix");
  const Eigen::Index K = lags[0].rows();
  const Eigen::Index h = static_cast<Eigen::Index>(lags.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(K * h, K * h);
  for (Eigen::Index i = 0; i < h; ++i) {
    if (lags[i].rows() != K || lags[i].cols() != K) fail(ErrorKind::numerical, "companion form: lag matrices must be K x K");
    C.block(0, i * K, K, K) = lags[i];
  }
  if (h > 1) C.bottomLeftCorner(K * (h - 1), K * (h - 1)).setIdentity();
  return C;
}

inline double spectral_radius(const Eigen::MatrixXd& m) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

// Responses far beyond the impact scale mark a draw as explosive.
inline constexpr double kExplosiveGrowth = 1e8;

struct IrfPath {
  std::vector<Eigen::MatrixXd> response;  // H + 1 entries, each K x S
  bool explosive = false;
};

// Response at horizon n is the top-left K x K block of companion^n times the
// impact columns. Only the top block row of the companion is multiplied; the
// identity blocks below it shift the state.
inline IrfPath propagate_irf(const Eigen::MatrixXd& companion, const Eigen::MatrixXd& impact, int horizon) {
  const Eigen::Index K = impact.rows();
  const Eigen::Index S = impact.cols();
  if (companion.rows() % K != 0 || companion.rows() != companion.cols()) {
    fail(ErrorKind::numerical, "propagate_irf: companion size is not a multiple of K");
  }
  const Eigen::Index KH = companion.rows();
  const Eigen::MatrixXd top = companion.topRows(K);
  IrfPath out;
  out.response.reserve(static_cast<std::size_t>(horizon) + 1);
  out.response.push_back(impact);
  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(KH, S);
  state.topRows(K) = impact;
  const double scale = std::max(impact.cwiseAbs().maxCoeff(), 1e-300);
  for (int n = 1; n <= horizon; ++n) {
    Eigen::MatrixXd next(KH, S);
    next.topRows(K).noalias() = top * state;
    if (KH > K) next.bottomRows(KH - K) = state.topRows(KH - K);
    state.swap(next);
    out.response.push_back(state.topRows(K));
    if (!state.topRows(K).allFinite() || state.topRows(K).cwiseAbs().maxCoeff() > kExplosiveGrowth * scale) {
      out.explosive = true;
    }
  }
  return out;
}

// values indexed (draw, shock, variable, horizon).
struct IrfTensor {
  int draws = 0;
  int shocks = 0;
  int variables = 0;
  int horizons = 0;  // H + 1
  std::vector<double> values;
  std::vector<std::string> units;  // per variable
  long excluded = 0;               // explosive draws dropped before storage

  static IrfTensor make(int d, int s, int v, int h) {
    IrfTensor t;
    t.draws = d;
    t.shocks = s;
    t.variables = v;
    t.horizons = h;
    t.values.assign(static_cast<std::size_t>(d) * s * v * h, 0.0);
    t.units.assign(v, "standardized");
    return t;
  }
  double& at(int d, int s, int v, int h) {
    return values[((static_cast<std::size_t>(d) * shocks + s) * variables + v) * horizons + h];
  }
  double at(int d, int s, int v, int h) const {
    return values[((static_cast<std::size_t>(d) * shocks + s) * variables + v) * horizons + h];
  }

  void append(const IrfPath& path) {
    const int s = static_cast<int>(path.response.front().cols());
    const int v = static_cast<int>(path.response.front().rows());
    const int h = static_cast<int>(path.response.size());
    if (draws == 0 && values.empty()) {
      shocks = s;
      variables = v;
      horizons = h;
      units.assign(v, "standardized");
    }
    if (s != shocks || v != variables || h != horizons) fail(ErrorKind::numerical, "IRF tensor: inconsistent draw shape");
    values.resize(values.size() + static_cast<std::size_t>(s) * v * h);
    for (int si = 0; si < s; ++si) {
      for (int vi = 0; vi < v; ++vi) {
        for (int hi = 0; hi < h; ++hi) at(draws, si, vi, hi) = path.response[hi](vi, si);
      }
    }
    ++draws;
  }
};

inline const char* unit_for(Transform t) { return t == Transform::log100 ? "percent" : "percentage points"; }

// Multiply each variable's responses by its original-series standard deviation.
inline IrfTensor rescale_to_units(IrfTensor t, const Eigen::VectorXd& sd, const std::vector<Transform>& transforms,
                                  const std::vector<std::string>& names = {}) {
  for (int v = 0; v < t.variables; ++v) {
    if (v >= sd.size() || v >= static_cast<int>(transforms.size()) || !(sd(v) > 0.0)) {
      const std::string name = v < static_cast<int>(names.size()) ? names[v] : "index " + std::to_string(v);
      fail(ErrorKind::data, "rescale: missing standardization ledger entry for variable " + name);
    }
  }
  for (int d = 0; d < t.draws; ++d) {
    for (int s = 0; s < t.shocks; ++s) {
      for (int v = 0; v < t.variables; ++v) {
        for (int h = 0; h < t.horizons; ++h) t.at(d, s, v, h) *= sd(v);
      }
    }
  }
  for (int v = 0; v < t.variables; ++v) t.units[v] = unit_for(transforms[v]);
  return t;
}

// Quantile of sorted data, linear interpolation between order statistics.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct IrfSummary {
  std::vector<double> quantiles;
  int shocks = 0;
  int variables = 0;
  int horizons = 0;
  std::vector<double> values;  // (quantile, shock, variable, horizon)
  std::vector<std::string> units;
  long included = 0;
  long excluded = 0;

  double at(int q, int s, int v, int h) const {
    return values[((static_cast<std::size_t>(q) * shocks + s) * variables + v) * horizons + h];
  }
};

inline IrfSummary summarize(const IrfTensor& t, const std::vector<double>& quantiles = {0.16, 0.5, 0.84}) {
  if (t.draws < 1) fail(ErrorKind::identification, "cannot summarize impulse responses: no retained draws");
  for (double q : quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::config, "quantiles must lie in [0, 1]");
  }
  IrfSummary out;
  out.quantiles = quantiles;
  out.shocks = t.shocks;
  out.variables = t.variables;
  out.horizons = t.horizons;
  out.units = t.units;
  out.included = t.draws;
  out.excluded = t.excluded;
  const std::size_t nq = quantiles.size();
  out.values.assign(nq * t.shocks * t.variables * t.horizons, 0.0);
  std::vector<double> buf(t.draws);
  for (int s = 0; s < t.shocks; ++s) {
    for (int v = 0; v < t.variables; ++v) {
      for (int h = 0; h < t.horizons; ++h) {
        for (int d = 0; d < t.draws; ++d) buf[d] = t.at(d, s, v, h);
        std::sort(buf.begin(), buf.end());
        for (std::size_t q = 0; q < nq; ++q) {
          out.values[((q * t.shocks + s) * t.variables + v) * t.horizons + h] = sorted_quantile(buf, quantiles[q]);
        }
      }
    }
  }
  return out;
}

inline std::string quantile_column(double q) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "q%g", q * 100.0);
  return buf;
}

// Long format: shock, variable, horizon, one column per quantile, unit.
inline void write_irf_csv(const std::string& path, const IrfSummary& s, const std::vector<std::string>& shock_labels,
                          const std::vector<std::string>& variable_ids) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write '" + path + "'");
  out << "shock,variable,horizon";
  for (double q : s.quantiles) out << ',' << quantile_column(q);
  out << ",unit\n";
  char buf[40];
  for (int sh = 0; sh < s.shocks; ++sh) {
    for (int v = 0; v < s.variables; ++v) {
      for (int h = 0; h < s.horizons; ++h) {
        out << shock_labels.at(sh) << ',' << variable_ids.at(v) << ',' << h;
        for (std::size_t q = 0; q < s.quantiles.size(); ++q) {
          std::snprintf(buf, sizeof buf, "%.10g", s.at(static_cast<int>(q), sh, v, h));
          out << ',' << buf;
        }
        out << ',' << s.units[v] << '\n';
      }
    }
  }
}

}  // namespace hfgvar
