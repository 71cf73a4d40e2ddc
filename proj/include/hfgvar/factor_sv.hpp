#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hfgvar/error.hpp"
#include "hfgvar/priors_samplers.hpp"
#include "hfgvar/rng.hpp"

namespace hfgvar {

// Mean-reverting AR(1) log-variance: h_t = level + persistence (h_{t-1} - level) + scale u_t.
struct SvParams {
  double level = 0.0;
  double persistence = 0.9;
  double scale = 0.1;
};

// level ~ N(level_mean, level_var), (persistence + 1) / 2 ~ Beta(a, b),
// scale^2 ~ Gamma(shape, rate).
struct SvPriors {
  double level_mean = 0.0;
  double level_var = 100.0;
  double beta_a = 25.0;
  double beta_b = 1.5;
  double scale2_shape = 0.5;
  double scale2_rate = 0.5;
};

// Error model eps_t = L f_t + eta_t with f_t ~ N(0, Sigma_t), eta_t ~ N(0, Omega_t).
struct VolatilityState {
  Eigen::MatrixXd loadings;       // K x F
  Eigen::MatrixXd factors;        // T x F
  Eigen::MatrixXd factor_logvar;  // T x F, log diag(Sigma_t)
  Eigen::MatrixXd idio_logvar;    // T x K, log diag(Omega_t)
  std::vector<SvParams> factor_params;
  std::vector<SvParams> idio_params;
  std::vector<bool> constant_variance;  // K; flagged series keep a flat path

  int series() const { return static_cast<int>(loadings.rows()); }
  int n_factors() const { return static_cast<int>(loadings.cols()); }
  int periods() const { return static_cast<int>(factors.rows()); }
};

// ---------------------------------------------------------------------------
// Loadings: row i regresses eps_i on the factors with heteroscedastic errors
// and an N(0, prior_var I) prior. All K x F entries are free.

inline Eigen::MatrixXd draw_loadings(const Eigen::MatrixXd& residuals, const Eigen::MatrixXd& factors,
                                     const Eigen::MatrixXd& idio_logvar, double prior_var, Rng& rng) {
  const Eigen::Index K = residuals.cols();
  const Eigen::Index F = factors.cols();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(F);
  const Eigen::VectorXd var = Eigen::VectorXd::Constant(F, prior_var);
  Eigen::MatrixXd L(K, F);
  for (Eigen::Index i = 0; i < K; ++i) {
    const Eigen::VectorXd vols = idio_logvar.col(i).array().exp();
    L.row(i) = draw_var_equation(residuals.col(i), factors, zero, var, vols, rng).transpose();
  }
  return L;
}

// ---------------------------------------------------------------------------
// Factors: f_t | . ~ N(B_t L' Omega_t^{-1} eps_t, B_t), B_t = (Sigma_t^{-1} + L' Omega_t^{-1} L)^{-1}.

struct FactorMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

inline Eigen::LLT<Eigen::MatrixXd> factor_precision(const Eigen::MatrixXd& L, const Eigen::VectorXd& sigma_t,
                                                    const Eigen::VectorXd& omega_t, int period) {
  const Eigen::ArrayXd inv_omega = (-omega_t.array()).exp();
  Eigen::MatrixXd P = L.transpose() * (L.array().colwise() * inv_omega).matrix();
  P.diagonal().array() += (-sigma_t.array()).exp();
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success || !P.allFinite()) {
    fail(ErrorKind::numerical, "factor draw: singular posterior precision at period " + std::to_string(period));
  }
  return llt;
}

inline FactorMoments factor_conditional(const Eigen::VectorXd& eps_t, const Eigen::MatrixXd& L,
                                        const Eigen::VectorXd& sigma_t, const Eigen::VectorXd& omega_t) {
  const auto llt = factor_precision(L, sigma_t, omega_t, 0);
  const Eigen::VectorXd rhs = L.transpose() * (eps_t.array() * (-omega_t.array()).exp()).matrix();
  FactorMoments m;
  m.mean = llt.solve(rhs);
  m.covariance = llt.solve(Eigen::MatrixXd::Identity(L.cols(), L.cols()));
  return m;
}

inline Eigen::MatrixXd draw_factors(const Eigen::MatrixXd& residuals, const Eigen::MatrixXd& L,
                                    const Eigen::MatrixXd& factor_logvar, const Eigen::MatrixXd& idio_logvar,
                                    Rng& rng) {
  const Eigen::Index T = residuals.rows();
  const Eigen::Index F = L.cols();
  Eigen::MatrixXd f(T, F);
  Eigen::VectorXd z(F);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd omega_t = idio_logvar.row(t).transpose();
    const auto llt = factor_precision(L, factor_logvar.row(t).transpose(), omega_t, static_cast<int>(t));
    const Eigen::VectorXd rhs =
        L.transpose() * (residuals.row(t).transpose().array() * (-omega_t.array()).exp()).matrix();
    for (Eigen::Index i = 0; i < F; ++i) z(i) = rng.normal();
    f.row(t) = (llt.solve(rhs) + llt.matrixU().solve(z)).transpose();
  }
  return f;
}

// ---------------------------------------------------------------------------
// Stochastic volatility via the 10-component Gaussian mixture approximation
// of log chi^2_1 (Omori, Chib, Shephard & Nakajima 2007) and forward-filter
// backward-sampling of the linear Gaussian state space.

struct LogChi2Mixture {
  static constexpr std::array<double, 10> prob = {0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                                                  0.18842, 0.12047, 0.05591, 0.01575, 0.00115};
  static constexpr std::array<double, 10> mean = {1.92677,  1.34744,  0.73504,  0.02266,  -0.85173,
                                                  -1.97278, -3.46788, -5.55246, -8.68384, -14.65};
  static constexpr std::array<double, 10> var = {0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                                                 0.98583, 1.57469, 2.54498, 4.16591, 7.33342};
};

inline constexpr double kLogSquareOffset = 1e-8;

// log(e_t^2 + c) with c a tiny fraction of the series' mean square, so exact
// zeros stay finite.
inline Eigen::VectorXd log_square_proxy(const Eigen::VectorXd& shocks) {
  const double ms = shocks.squaredNorm() / std::max<double>(1.0, static_cast<double>(shocks.size()));
  const double c = kLogSquareOffset * (ms > 0.0 ? ms : 1.0);
  return (shocks.array().square() + c).log();
}

inline Eigen::VectorXi draw_mixture_indicators(const Eigen::VectorXd& proxy, const Eigen::VectorXd& path,
                                               Rng& rng) {
  using M = LogChi2Mixture;
  Eigen::VectorXi r(proxy.size());
  std::array<double, 10> logw{};
  for (Eigen::Index t = 0; t < proxy.size(); ++t) {
    const double d = proxy(t) - path(t);
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < 10; ++j) {
      const double e = d - M::mean[j];
      logw[j] = std::log(M::prob[j]) - 0.5 * std::log(M::var[j]) - 0.5 * e * e / M::var[j];
      best = std::max(best, logw[j]);
    }
    if (!std::isfinite(best)) {
      fail(ErrorKind::numerical, "stochastic volatility: mixture responsibilities underflow at period " +
                                     std::to_string(t));
    }
    double total = 0.0;
    for (double& w : logw) total += (w = std::exp(w - best));
    double u = rng.uniform() * total;
    int j = 0;
    while (j < 9 && (u -= logw[j]) > 0.0) ++j;
    r(t) = j;
  }
  return r;
}

// Draw h_{0..T-1} given mixture indicators and AR(1) parameters, with a
// stationary initial state.
inline Eigen::VectorXd ffbs_log_variance(const Eigen::VectorXd& proxy, const Eigen::VectorXi& indicators,
                                         const SvParams& p, Rng& rng) {
  using M = LogChi2Mixture;
  const Eigen::Index T = proxy.size();
  const double phi = p.persistence;
  const double s2 = p.scale * p.scale;
  Eigen::VectorXd m(T), C(T);
  double a = p.level;
  double P = s2 / (1.0 - phi * phi);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double obs = proxy(t) - M::mean[indicators(t)];
    const double v = M::var[indicators(t)];
    const double gain = P / (P + v);
    m(t) = a + gain * (obs - a);
    C(t) = P * (1.0 - gain);
    a = p.level + phi * (m(t) - p.level);
    P = phi * phi * C(t) + s2;
  }
  Eigen::VectorXd h(T);
  h(T - 1) = m(T - 1) + std::sqrt(C(T - 1)) * rng.normal();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const double pred_var = phi * phi * C(t) + s2;
    const double g = C(t) * phi / pred_var;
    const double mean = m(t) + g * (h(t + 1) - p.level - phi * (m(t) - p.level));
    const double var = std::max(C(t) - g * phi * C(t), 0.0);
    h(t) = mean + std::sqrt(var) * rng.normal();
  }
  return h;
}

// One pass over (level, persistence, scale) given the path.
inline SvParams draw_sv_params(const Eigen::VectorXd& h, SvParams p, const SvPriors& prior, Rng& rng) {
  const Eigen::Index T = h.size();
  if (T < 3) return p;

  // Level: Gaussian conjugate.
  {
    const double phi = p.persistence;
    const double s2 = p.scale * p.scale;
    double sum = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) sum += h(t) - phi * h(t - 1);
    const double prec = 1.0 / prior.level_var + ((1.0 - phi * phi) + (T - 1) * (1.0 - phi) * (1.0 - phi)) / s2;
    const double num = prior.level_mean / prior.level_var + ((1.0 - phi * phi) * h(0) + (1.0 - phi) * sum) / s2;
    p.level = num / prec + rng.normal() / std::sqrt(prec);
  }
  const Eigen::VectorXd x = h.array() - p.level;

  // Persistence: Gaussian AR proposal, MH correction for the Beta prior and
  // the stationary initial state.
  {
    const double s2 = p.scale * p.scale;
    const double sxx = x.head(T - 1).squaredNorm();
    const double sxy = x.tail(T - 1).dot(x.head(T - 1));
    const double prop = sxy / sxx + std::sqrt(s2 / sxx) * rng.normal();
    const double log_u = std::log(rng.uniform_pos());
    if (std::abs(prop) < 1.0) {
      auto g = [&](double phi) {
        return (prior.beta_a - 1.0) * std::log((1.0 + phi) / 2.0) + (prior.beta_b - 1.0) * std::log((1.0 - phi) / 2.0) +
               0.5 * std::log(1.0 - phi * phi) - (1.0 - phi * phi) * x(0) * x(0) / (2.0 * s2);
      };
      if (log_u < g(prop) - g(p.persistence)) p.persistence = prop;
    }
  }

  // Scale: inverse-gamma proposal from the likelihood, MH correction for the
  // Gamma prior on scale^2.
  {
    const double phi = p.persistence;
    double S = (1.0 - phi * phi) * x(0) * x(0);
    for (Eigen::Index t = 1; t < T; ++t) {
      const double e = x(t) - phi * x(t - 1);
      S += e * e;
    }
    const double prop = rng.inv_gamma(static_cast<double>(T) / 2.0 - 1.0, S / 2.0);
    const double log_u = std::log(rng.uniform_pos());
    const double cur = p.scale * p.scale;
    auto log_prior = [&](double s2) { return (prior.scale2_shape - 1.0) * std::log(s2) - prior.scale2_rate * s2; };
    if (prop > 0.0 && std::isfinite(prop) && log_u < log_prior(prop) - log_prior(cur)) p.scale = std::sqrt(prop);
  }
  return p;
}

struct SvDraw {
  Eigen::VectorXd path;
  SvParams params;
};

// One Gibbs update of a log-variance path and its parameters. `proxy` holds
// log squared shocks (see log_square_proxy).
inline SvDraw draw_sv_path(const Eigen::VectorXd& proxy, const Eigen::VectorXd& current_path,
                           const SvParams& params, const SvPriors& prior, Rng& rng) {
  if (proxy.size() != current_path.size() || proxy.size() < 1) {
    fail(ErrorKind::numerical, "stochastic volatility: proxy and path lengths differ");
  }
  if (!proxy.allFinite()) fail(ErrorKind::numerical, "stochastic volatility: non-finite log-square proxy");
  const Eigen::VectorXi r = draw_mixture_indicators(proxy, current_path, rng);
  SvDraw out;
  out.path = ffbs_log_variance(proxy, r, params, rng);
  out.params = draw_sv_params(out.path, params, prior, rng);
  return out;
}

// Constant variance with an inverse-gamma prior; returns log variance.
inline double draw_constant_logvar(const Eigen::VectorXd& shocks, double prior_shape, double prior_scale,
                                   Rng& rng) {
  const double n = static_cast<double>(shocks.size());
  return std::log(rng.inv_gamma(prior_shape + n / 2.0, prior_scale + shocks.squaredNorm() / 2.0));
}

// ---------------------------------------------------------------------------
// Xi_t = L Sigma_t L' + Omega_t.

inline Eigen::MatrixXd covariance_at(const Eigen::MatrixXd& L, const Eigen::VectorXd& factor_logvar_t,
                                     const Eigen::VectorXd& idio_logvar_t) {
  Eigen::MatrixXd xi = L * (factor_logvar_t.array().exp().matrix().asDiagonal()) * L.transpose();
  xi.diagonal() += idio_logvar_t.array().exp().matrix();
  return 0.5 * (xi + xi.transpose()).eval();
}

// Time average of Xi_t.
inline Eigen::MatrixXd assemble_covariance(const Eigen::MatrixXd& L, const Eigen::MatrixXd& factor_logvar,
                                           const Eigen::MatrixXd& idio_logvar) {
  if (factor_logvar.cols() != L.cols() || idio_logvar.cols() != L.rows() ||
      factor_logvar.rows() != idio_logvar.rows()) {
    fail(ErrorKind::numerical, "covariance assembly: inconsistent dimensions");
  }
  if (!L.allFinite() || !factor_logvar.allFinite() || !idio_logvar.allFinite()) {
    fail(ErrorKind::numerical, "covariance assembly: non-finite variance entries");
  }
  const Eigen::Index T = factor_logvar.rows();
  // sum_t L Sigma_t L' = L diag(sum_t exp(sigma_t)) L'.
  const Eigen::VectorXd mean_factor_var = factor_logvar.array().exp().colwise().mean().transpose();
  Eigen::MatrixXd xi = L * mean_factor_var.asDiagonal() * L.transpose();
  xi.diagonal() += idio_logvar.array().exp().colwise().mean().transpose().matrix();
  xi = (0.5 * (xi + xi.transpose())).eval();
  if (!xi.allFinite()) fail(ErrorKind::numerical, "covariance assembly: non-finite average over " + std::to_string(T) + " periods");
  return xi;
}

}  // namespace hfgvar
