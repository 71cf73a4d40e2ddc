#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "hfgvar/error.hpp"
#include "hfgvar/rng.hpp"

namespace hfgvar {

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian, density proportional to
//   x^(lambda - 1) exp(-(chi / x + psi x) / 2).
//
// Hoermann & Leydold (2014): ratio-of-uniforms with or without mode shift,
// and the three-piece envelope for lambda < 1 with small omega. Negative
// lambda draws 1/X with X ~ GIG(-lambda) on the standardized scale.

namespace gig_detail {

inline double mode(double lambda, double omega) {
  if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

inline double rou_noshift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  for (;;) {
    const double u = um * rng.uniform();
    const double v = rng.uniform_pos();
    const double x = u / v;
    if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

inline double rou_shift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

  // Roots of the cubic bounding the minimal rectangle.
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

  for (;;) {
    const double u = uminus + rng.uniform() * (uplus - uminus);
    const double v = rng.uniform_pos();
    const double x = u / v + xm;
    if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// lambda in [0, 1), omega <= 1.
inline double three_piece(double lambda, double omega, Rng& rng) {
  const double xm = mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);
  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  const double A1 = k0 * x0;
  double k1, k2, A2, A3;
  if (x0 >= 2.0 / omega) {
    k1 = 0.0;
    A2 = 0.0;
    k2 = std::pow(x0, lambda - 1.0);
    A3 = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
  } else {
    k1 = std::exp(-omega);
    A2 = lambda == 0.0 ? k1 * std::log(2.0 / (omega * omega))
                       : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
    k2 = std::pow(2.0 / omega, lambda - 1.0);
    A3 = k2 * 2.0 * std::exp(-1.0) / omega;
  }
  const double total = A1 + A2 + A3;
  for (;;) {
    double v = total * rng.uniform();
    double x, hx;
    if (v <= A1) {
      x = x0 * v / A1;
      hx = k0;
    } else if ((v -= A1) <= A2) {
      if (lambda == 0.0) {
        x = omega * std::exp(std::exp(omega) * v);
        hx = k1 / x;
      } else {
        x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
        hx = k1 * std::pow(x, lambda - 1.0);
      }
    } else {
      v -= A2;
      const double a = std::max(x0, 2.0 / omega);
      x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * a) - omega / (2.0 * k2) * v);
      hx = k2 * std::exp(-omega / 2.0 * x);
    }
    const double u = rng.uniform() * hx;
    if (x > 0.0 && std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
  }
}

}  // namespace gig_detail

inline double draw_gig(double lambda, double chi, double psi, Rng& rng) {
  constexpr double ztol = 10.0 * std::numeric_limits<double>::epsilon();
  if (!std::isfinite(lambda) || !std::isfinite(chi) || !std::isfinite(psi) || chi < 0.0 || psi < 0.0) {
    fail(ErrorKind::numerical, "GIG parameters must be finite with chi, psi >= 0");
  }
  if (chi < ztol && psi < ztol) fail(ErrorKind::numerical, "GIG requires chi > 0 or psi > 0");
  if (chi < ztol) {
    if (lambda <= 0.0) fail(ErrorKind::numerical, "GIG with chi = 0 requires lambda > 0");
    return rng.gamma(lambda, psi / 2.0);
  }
  if (psi < ztol) {
    if (lambda >= 0.0) fail(ErrorKind::numerical, "GIG with psi = 0 requires lambda < 0");
    return rng.inv_gamma(-lambda, chi / 2.0);
  }
  const double abs_lambda = std::abs(lambda);
  const double alpha = std::sqrt(chi / psi);
  const double omega = std::sqrt(psi * chi);
  double x;
  if (abs_lambda > 2.0 || omega > 3.0) {
    x = gig_detail::rou_shift(abs_lambda, omega, rng);
  } else if (abs_lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
    x = gig_detail::rou_noshift(abs_lambda, omega, rng);
  } else {
    x = gig_detail::three_piece(abs_lambda, omega, rng);
  }
  return lambda < 0.0 ? alpha / x : alpha * x;
}

// ---------------------------------------------------------------------------
// Normal-Gamma global-local prior on the free aggregate coefficients:
//   a_0i ~ N(0, tau_0i),  tau_0i ~ G(b, b lambda / 2),  lambda ~ G(d0, d1),
//   b ~ Exp(1).

struct NormalGammaState {
  Eigen::VectorXd tau;
  double lambda = 1.0;
  double b = 0.5;
  double d0 = 0.01;
  double d1 = 0.01;
};

inline constexpr double kTauFloor = 1e-10;
inline constexpr double kTauCeiling = 1e10;

inline NormalGammaState update_normal_gamma(const Eigen::VectorXd& a0, NormalGammaState state, Rng& rng) {
  if (a0.size() != state.tau.size()) {
    fail(ErrorKind::numerical, "Normal-Gamma update: coefficient vector has length " +
                                   std::to_string(a0.size()) + ", expected " + std::to_string(state.tau.size()));
  }
  const double shape = state.b - 0.5;
  const double psi = state.b * state.lambda;
  for (Eigen::Index i = 0; i < a0.size(); ++i) {
    double chi = a0(i) * a0(i);
    // GIG(lambda <= 0, chi = 0, .) is improper; an exact zero only arises from
    // degenerate inputs.
    if (shape <= 0.0 && chi < kTauFloor) chi = kTauFloor;
    state.tau(i) = std::clamp(draw_gig(shape, chi, psi, rng), kTauFloor, kTauCeiling);
  }
  const double L = static_cast<double>(a0.size());
  state.lambda = rng.gamma(state.d0 + L * state.b, state.d1 + 0.5 * state.b * state.tau.sum());
  return state;
}

// log p(b | tau, lambda) up to a constant: Exp(1) prior times the Gamma
// densities of the local scales.
inline double btau_log_target(double b, const Eigen::VectorXd& tau, double lambda) {
  const double rate = 0.5 * b * lambda;
  const double n = static_cast<double>(tau.size());
  return -b + n * (b * std::log(rate) - std::lgamma(b)) + (b - 1.0) * tau.array().log().sum() -
         rate * tau.sum();
}

// Log MH ratio for a log-normal random-walk move b_old -> b_new, including
// the proposal's Jacobian term log(b_new / b_old).
inline double btau_log_acceptance(double b_old, double b_new, const Eigen::VectorXd& tau, double lambda) {
  return btau_log_target(b_new, tau, lambda) - btau_log_target(b_old, tau, lambda) + std::log(b_new) -
         std::log(b_old);
}

struct MhResult {
  double value;
  bool accepted;
};

inline MhResult mh_step_btau(const NormalGammaState& state, double proposal_scale, Rng& rng) {
  const double z = rng.normal();
  const double proposal = state.b * std::exp(proposal_scale * z);
  const double log_u = std::log(rng.uniform_pos());
  if (proposal == state.b) return {state.b, true};
  const double log_ratio = btau_log_acceptance(state.b, proposal, state.tau, state.lambda);
  if (std::isfinite(log_ratio) && log_u < log_ratio) return {proposal, true};
  return {state.b, false};
}

// ---------------------------------------------------------------------------
// Heteroscedastic Bayesian regression y = X beta + e, e_t ~ N(0, vol_t),
// beta ~ N(m, diag(v)).

struct RegressionPosterior {
  Eigen::VectorXd mean;
  Eigen::LLT<Eigen::MatrixXd> precision;  // factor of X' diag(1/vol) X + diag(1/v)
};

inline RegressionPosterior regression_posterior(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& prior_mean,
                                                const Eigen::VectorXd& prior_var,
                                                const Eigen::VectorXd& error_vols) {
  if (X.rows() != y.size() || error_vols.size() != y.size() || prior_mean.size() != X.cols() ||
      prior_var.size() != X.cols()) {
    fail(ErrorKind::numerical, "regression kernel: inconsistent dimensions");
  }
  if (!((error_vols.array() > 0.0).all()) || !error_vols.allFinite()) {
    fail(ErrorKind::numerical, "regression kernel: error variances must be positive and finite");
  }
  const Eigen::ArrayXd inv_sd = error_vols.array().rsqrt();
  const Eigen::MatrixXd Xs = X.array().colwise() * inv_sd;
  const Eigen::VectorXd ys = y.array() * inv_sd;
  Eigen::MatrixXd P = Xs.transpose() * Xs;
  P.diagonal().array() += prior_var.array().inverse();
  const Eigen::VectorXd rhs = Xs.transpose() * ys + (prior_mean.array() / prior_var.array()).matrix();
  RegressionPosterior post;
  post.precision.compute(P);
  if (post.precision.info() != Eigen::Success || !P.allFinite()) {
    fail(ErrorKind::numerical, "regression kernel: posterior precision is not positive definite "
                               "(degenerate regressors)");
  }
  post.mean = post.precision.solve(rhs);
  return post;
}

inline Eigen::VectorXd draw_var_equation(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& prior_mean, const Eigen::VectorXd& prior_var,
                                         const Eigen::VectorXd& error_vols, Rng& rng) {
  const RegressionPosterior post = regression_posterior(y, X, prior_mean, prior_var, error_vols);
  Eigen::VectorXd z(X.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  // P = L L'  =>  L'^{-1} z ~ N(0, P^{-1}).
  return post.mean + post.precision.matrixU().solve(z);
}

// ---------------------------------------------------------------------------
// Hierarchical pooling of country coefficient vectors:
//   a_j ~ N(mu, diag(v)),  mu ~ N(mu0, diag(V0)),  v_l ~ IG(dv0, dv1).

struct PoolingState {
  Eigen::VectorXd mu;
  Eigen::VectorXd v;
  Eigen::VectorXd mu0;
  Eigen::VectorXd V0;  // diagonal
  double dv0 = 0.1;
  double dv1 = 0.1;

  static PoolingState initial(Eigen::Index L, double dv0 = 0.1, double dv1 = 0.1) {
    return {Eigen::VectorXd::Zero(L), Eigen::VectorXd::Ones(L), Eigen::VectorXd::Zero(L),
            Eigen::VectorXd::Ones(L), dv0, dv1};
  }
};

struct PoolingMoments {
  Eigen::VectorXd mean;      // mu~
  Eigen::VectorXd variance;  // diagonal of V~
};

inline PoolingMoments pooling_mean_moments(const std::vector<Eigen::VectorXd>& a, const PoolingState& s) {
  const double N = static_cast<double>(a.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(s.mu.size());
  for (const auto& aj : a) sum += aj;
  PoolingMoments m;
  m.variance = (N * s.v.array().inverse() + s.V0.array().inverse()).inverse();
  m.mean = m.variance.array() * (sum.array() / s.v.array() + s.mu0.array() / s.V0.array());
  return m;
}

inline PoolingState update_pooling(const std::vector<Eigen::VectorXd>& a, PoolingState s, Rng& rng) {
  if (a.empty()) fail(ErrorKind::numerical, "pooling update needs at least one country");
  for (const auto& aj : a) {
    if (aj.size() != s.mu.size()) fail(ErrorKind::numerical, "pooling update: coefficient length mismatch");
  }
  const PoolingMoments m = pooling_mean_moments(a, s);
  for (Eigen::Index l = 0; l < s.mu.size(); ++l) s.mu(l) = m.mean(l) + std::sqrt(m.variance(l)) * rng.normal();
  const double N = static_cast<double>(a.size());
  for (Eigen::Index l = 0; l < s.mu.size(); ++l) {
    double ss = 0.0;
    for (const auto& aj : a) ss += (aj(l) - s.mu(l)) * (aj(l) - s.mu(l));
    s.v(l) = rng.inv_gamma(s.dv0 + N / 2.0, s.dv1 + ss / 2.0);
  }
  return s;
}

}  // namespace hfgvar
