#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hfgvar/binary_io.hpp"
#include "hfgvar/error.hpp"
#include "hfgvar/factor_sv.hpp"
#include "hfgvar/model_core.hpp"
#include "hfgvar/priors_samplers.hpp"
#include "hfgvar/rng.hpp"

namespace hfgvar {

struct ChainConfig {
  long total = 9000;
  long burn_in = 3000;
  long thin = 2;
  std::uint64_t seed = 1;
  long checkpoint_interval = 0;  // 0 disables checkpoints

  long retained() const { return (total - burn_in) / thin; }
};

inline std::vector<std::string> validate_chain(const ChainConfig& c) {
  std::vector<std::string> out;
  if (c.total < 1) out.push_back("total sweeps must be >= 1");
  if (c.burn_in < 0 || c.burn_in >= c.total) out.push_back("burn-in must satisfy 0 <= burn_in < total");
  if (c.thin < 1) out.push_back("thinning stride must be >= 1");
  if (c.checkpoint_interval < 0) out.push_back("checkpoint interval must be >= 0");
  return out;
}

inline void to_json(nlohmann::json& j, const ChainConfig& c) {
  j = {{"total", c.total}, {"burn_in", c.burn_in}, {"thin", c.thin}, {"seed", c.seed},
       {"checkpoint_interval", c.checkpoint_interval}};
}
inline void from_json(const nlohmann::json& j, ChainConfig& c) {
  c.total = j.value("total", c.total);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.thin = j.value("thin", c.thin);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
}

// Prior hyperparameters and sampler tunables.
struct GibbsPriors {
  double ng_d0 = 0.01;
  double ng_d1 = 0.01;
  double ng_b_initial = 0.5;
  double btau_scale = 0.25;
  bool adapt_btau = true;
  double pool_dv0 = 0.1;
  double pool_dv1 = 0.1;
  double loading_var = 0.1;
  SvPriors sv;
  bool constant_variance_surprises = true;
  double constant_var_shape = 0.01;
  double constant_var_scale = 0.01;
};

inline void to_json(nlohmann::json& j, const GibbsPriors& p) {
  j = {{"ng_d0", p.ng_d0},
       {"ng_d1", p.ng_d1},
       {"ng_b_initial", p.ng_b_initial},
       {"btau_scale", p.btau_scale},
       {"adapt_btau", p.adapt_btau},
       {"pool_dv0", p.pool_dv0},
       {"pool_dv1", p.pool_dv1},
       {"loading_var", p.loading_var},
       {"sv_level_mean", p.sv.level_mean},
       {"sv_level_var", p.sv.level_var},
       {"sv_beta_a", p.sv.beta_a},
       {"sv_beta_b", p.sv.beta_b},
       {"sv_scale2_shape", p.sv.scale2_shape},
       {"sv_scale2_rate", p.sv.scale2_rate},
       {"constant_variance_surprises", p.constant_variance_surprises},
       {"constant_var_shape", p.constant_var_shape},
       {"constant_var_scale", p.constant_var_scale}};
}
inline void from_json(const nlohmann::json& j, GibbsPriors& p) {
  p.ng_d0 = j.value("ng_d0", p.ng_d0);
  p.ng_d1 = j.value("ng_d1", p.ng_d1);
  p.ng_b_initial = j.value("ng_b_initial", p.ng_b_initial);
  p.btau_scale = j.value("btau_scale", p.btau_scale);
  p.adapt_btau = j.value("adapt_btau", p.adapt_btau);
  p.pool_dv0 = j.value("pool_dv0", p.pool_dv0);
  p.pool_dv1 = j.value("pool_dv1", p.pool_dv1);
  p.loading_var = j.value("loading_var", p.loading_var);
  p.sv.level_mean = j.value("sv_level_mean", p.sv.level_mean);
  p.sv.level_var = j.value("sv_level_var", p.sv.level_var);
  p.sv.beta_a = j.value("sv_beta_a", p.sv.beta_a);
  p.sv.beta_b = j.value("sv_beta_b", p.sv.beta_b);
  p.sv.scale2_shape = j.value("sv_scale2_shape", p.sv.scale2_shape);
  p.sv.scale2_rate = j.value("sv_scale2_rate", p.sv.scale2_rate);
  p.constant_variance_surprises = j.value("constant_variance_surprises", p.constant_variance_surprises);
  p.constant_var_shape = j.value("constant_var_shape", p.constant_var_shape);
  p.constant_var_scale = j.value("constant_var_scale", p.constant_var_scale);
}

struct ChainState {
  CoefficientState coefficients;
  NormalGammaState shrinkage;
  PoolingState pooling;
  VolatilityState volatility;
  double btau_scale = 0.25;
  long btau_accepted = 0;
  long btau_proposed = 0;
  long window_accepted = 0;  // burn-in adaptation window
  long window_proposed = 0;
  long sweep = 0;
};

// ---------------------------------------------------------------------------

inline ChainState initialize_state(const RegressionDesign& d, const GibbsPriors& priors, Rng& rng) {
  const ModelSpec& s = d.spec;
  const int T = d.periods();
  const int K = s.K();
  const int F = s.n_factors;
  ChainState st;
  st.coefficients = CoefficientState::zeros(s);
  st.shrinkage.tau = Eigen::VectorXd::Ones(s.aggregate_coefficients());
  st.shrinkage.lambda = 1.0;
  st.shrinkage.b = priors.ng_b_initial;
  st.shrinkage.d0 = priors.ng_d0;
  st.shrinkage.d1 = priors.ng_d1;
  st.pooling = PoolingState::initial(s.country_coefficients(), priors.pool_dv0, priors.pool_dv1);
  st.btau_scale = priors.btau_scale;

  VolatilityState& v = st.volatility;
  v.loadings.resize(K, F);
  for (Eigen::Index i = 0; i < v.loadings.size(); ++i) v.loadings.data()[i] = 0.01 * rng.normal();
  v.factors = Eigen::MatrixXd::Zero(T, F);
  v.factor_logvar = Eigen::MatrixXd::Zero(T, F);
  v.factor_params.assign(F, SvParams{0.0, 0.9, 0.1});
  v.idio_logvar.resize(T, K);
  v.idio_params.resize(K);
  v.constant_variance.assign(K, false);
  if (priors.constant_variance_surprises) {
    for (int i = 0; i < s.n_surprises(); ++i) v.constant_variance[i] = true;
  }

  // Least-squares pre-pass for the idiosyncratic variances.
  auto residual_var = [&](const Eigen::VectorXd& y, const Eigen::MatrixXd* X) {
    Eigen::VectorXd e = y;
    if (X != nullptr) e = y - *X * X->colPivHouseholderQr().solve(y);
    const double var = e.squaredNorm() / std::max(1.0, static_cast<double>(T));
    const double ref = (y.array() - y.mean()).square().mean();
    return std::max({var, 1e-6 * ref, 1e-12});
  };
  for (int i = 0; i < K; ++i) {
    const Eigen::MatrixXd* X = nullptr;
    if (i >= s.n_surprises() && i < s.l()) X = &d.aggregate;
    if (i >= s.l()) X = &d.country[(i - s.l()) / s.k_country];
    const double lv = std::log(residual_var(d.y.col(i), X));
    v.idio_logvar.col(i).setConstant(lv);
    v.idio_params[i] = SvParams{lv, 0.9, 0.1};
  }
  return st;
}

// Gaussian log-likelihood of the reduced-form residuals under a fixed
// covariance.
inline double conditional_log_likelihood(const RegressionDesign& d, const CoefficientState& c,
                                         const Eigen::MatrixXd& xi_bar) {
  const Eigen::MatrixXd e = d.y - fitted_values(d, c);
  Eigen::LLT<Eigen::MatrixXd> llt(xi_bar);
  if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "log-likelihood: covariance not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd z = llt.matrixL().solve(e.transpose());
  const double T = static_cast<double>(e.rows());
  const double K = static_cast<double>(e.cols());
  return -0.5 * (T * K * std::log(2.0 * std::numbers::pi) + T * logdet + z.squaredNorm());
}

namespace gibbs_detail {

template <class Fn>
void step(int index, const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    fail(e.kind(), "Gibbs step " + std::to_string(index) + " (" + name + "): " + e.what());
  }
}

}  // namespace gibbs_detail

// One pass of the six conditional updates, in order.
inline void gibbs_sweep(ChainState& st, const RegressionDesign& d, const GibbsPriors& priors, Rng& rng,
                        bool adapt = false) {
  const ModelSpec& s = d.spec;
  const int J0 = s.aggregate_regressors();
  const int J = s.country_regressors();
  const int k = s.k_country;
  VolatilityState& v = st.volatility;
  Eigen::MatrixXd residuals;

  gibbs_detail::step(1, "VAR coefficients", [&] {
    const Eigen::MatrixXd common = v.factors * v.loadings.transpose();
    for (int i = s.n_surprises(); i < s.l(); ++i) {
      const int row = i - s.n_surprises();
      const Eigen::VectorXd y = d.y.col(i) - common.col(i);
      const Eigen::VectorXd vols = v.idio_logvar.col(i).array().exp();
      st.coefficients.aggregate.row(i) =
          draw_var_equation(y, d.aggregate, Eigen::VectorXd::Zero(J0), st.shrinkage.tau.segment(row * J0, J0), vols, rng)
              .transpose();
    }
    for (int j = 1; j <= s.n_countries; ++j) {
      for (int e = 0; e < k; ++e) {
        const int i = s.country_offset(j) + e;
        const Eigen::VectorXd y = d.y.col(i) - common.col(i);
        const Eigen::VectorXd vols = v.idio_logvar.col(i).array().exp();
        st.coefficients.country[j - 1].row(e) =
            draw_var_equation(y, d.country[j - 1], st.pooling.mu.segment(e * J, J), st.pooling.v.segment(e * J, J),
                              vols, rng)
                .transpose();
      }
    }
    residuals = d.y - fitted_values(d, st.coefficients);
  });

  gibbs_detail::step(2, "pooling prior", [&] {
    std::vector<Eigen::VectorXd> a;
    for (int j = 1; j <= s.n_countries; ++j) a.push_back(st.coefficients.country_vector(j));
    st.pooling = update_pooling(a, st.pooling, rng);
  });

  gibbs_detail::step(3, "Normal-Gamma shrinkage", [&] {
    st.shrinkage = update_normal_gamma(st.coefficients.aggregate_vector(), st.shrinkage, rng);
    const MhResult mh = mh_step_btau(st.shrinkage, st.btau_scale, rng);
    st.shrinkage.b = mh.value;
    ++st.btau_proposed;
    ++st.window_proposed;
    if (mh.accepted) {
      ++st.btau_accepted;
      ++st.window_accepted;
    }
    if (adapt && priors.adapt_btau && st.window_proposed == 50) {
      const double rate = static_cast<double>(st.window_accepted) / 50.0;
      if (rate > 0.4) st.btau_scale *= 1.1;
      if (rate < 0.2) st.btau_scale *= 0.9;
      st.window_accepted = st.window_proposed = 0;
    }
  });

  gibbs_detail::step(4, "factor loadings", [&] {
    v.loadings = draw_loadings(residuals, v.factors, v.idio_logvar, priors.loading_var, rng);
  });

  gibbs_detail::step(5, "latent factors", [&] {
    v.factors = draw_factors(residuals, v.loadings, v.factor_logvar, v.idio_logvar, rng);
  });

  gibbs_detail::step(6, "stochastic volatility", [&] {
    for (int f = 0; f < s.n_factors; ++f) {
      const SvDraw out =
          draw_sv_path(log_square_proxy(v.factors.col(f)), v.factor_logvar.col(f), v.factor_params[f], priors.sv, rng);
      v.factor_logvar.col(f) = out.path;
      v.factor_params[f] = out.params;
    }
    const Eigen::MatrixXd idio = residuals - v.factors * v.loadings.transpose();
    for (int i = 0; i < s.K(); ++i) {
      if (v.constant_variance[i]) {
        v.idio_logvar.col(i).setConstant(
            draw_constant_logvar(idio.col(i), priors.constant_var_shape, priors.constant_var_scale, rng));
        continue;
      }
      const SvDraw out =
          draw_sv_path(log_square_proxy(idio.col(i)), v.idio_logvar.col(i), v.idio_params[i], priors.sv, rng);
      v.idio_logvar.col(i) = out.path;
      v.idio_params[i] = out.params;
    }
  });
  ++st.sweep;
}

// ---------------------------------------------------------------------------
// Retained draws

struct StoredDraw {
  CoefficientState coefficients;
  Eigen::MatrixXd loadings;
  std::vector<SvParams> factor_params;
  std::vector<SvParams> idio_params;
  Eigen::MatrixXd xi_bar;
  double log_likelihood = 0.0;
};

struct DrawStore {
  ModelSpec spec;
  ChainConfig config;
  GibbsPriors priors;
  std::vector<StoredDraw> draws;
  double btau_acceptance = 0.0;
  double btau_scale = 0.0;
};

inline StoredDraw snapshot(const ChainState& st, const RegressionDesign& d) {
  StoredDraw out;
  out.coefficients = st.coefficients;
  out.loadings = st.volatility.loadings;
  out.factor_params = st.volatility.factor_params;
  out.idio_params = st.volatility.idio_params;
  out.xi_bar = assemble_covariance(st.volatility.loadings, st.volatility.factor_logvar, st.volatility.idio_logvar);
  out.log_likelihood = conditional_log_likelihood(d, st.coefficients, out.xi_bar);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: "HFGVCKPT", format version, spec/data/config hashes, payload
// length, payload FNV-1a checksum, payload.

inline constexpr char kCheckpointMagic[8] = {'H', 'F', 'G', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t spec_hash(const ModelSpec& s) { return fnv1a(nlohmann::json(s).dump()); }

inline std::uint64_t data_hash(const RegressionDesign& d) {
  return fnv1a(d.y.data(), sizeof(double) * static_cast<std::size_t>(d.y.size()));
}

inline std::uint64_t chain_hash(const ChainConfig& c, const GibbsPriors& p) {
  nlohmann::json j{{"total", c.total}, {"burn_in", c.burn_in}, {"thin", c.thin}, {"seed", c.seed}, {"priors", p}};
  return fnv1a(j.dump());
}

namespace gibbs_detail {

inline void put_sv(ByteWriter& w, const std::vector<SvParams>& ps) {
  w.put<std::uint64_t>(ps.size());
  for (const auto& p : ps) {
    w.put(p.level);
    w.put(p.persistence);
    w.put(p.scale);
  }
}
inline std::vector<SvParams> get_sv(ByteReader& r) {
  std::vector<SvParams> ps(r.get<std::uint64_t>());
  for (auto& p : ps) {
    p.level = r.get<double>();
    p.persistence = r.get<double>();
    p.scale = r.get<double>();
  }
  return ps;
}
inline void put_coeffs(ByteWriter& w, const CoefficientState& c) {
  w.put_matrix(c.aggregate);
  w.put<std::uint64_t>(c.country.size());
  for (const auto& m : c.country) w.put_matrix(m);
}
inline CoefficientState get_coeffs(ByteReader& r, const ModelSpec& s) {
  CoefficientState c;
  c.spec = s;
  c.aggregate = r.get_matrix();
  c.country.resize(r.get<std::uint64_t>());
  for (auto& m : c.country) m = r.get_matrix();
  return c;
}

}  // namespace gibbs_detail

inline void write_checkpoint(const std::string& path, const ChainState& st, const std::vector<StoredDraw>& draws,
                             const Rng& rng, const RegressionDesign& d, const ChainConfig& cfg,
                             const GibbsPriors& priors) {
  using namespace gibbs_detail;
  ByteWriter p;
  p.put_string(rng.save());
  p.put<std::int64_t>(st.sweep);
  put_coeffs(p, st.coefficients);
  p.put_vector(st.shrinkage.tau);
  p.put(st.shrinkage.lambda);
  p.put(st.shrinkage.b);
  p.put(st.shrinkage.d0);
  p.put(st.shrinkage.d1);
  p.put_vector(st.pooling.mu);
  p.put_vector(st.pooling.v);
  p.put_vector(st.pooling.mu0);
  p.put_vector(st.pooling.V0);
  p.put(st.pooling.dv0);
  p.put(st.pooling.dv1);
  const VolatilityState& v = st.volatility;
  p.put_matrix(v.loadings);
  p.put_matrix(v.factors);
  p.put_matrix(v.factor_logvar);
  p.put_matrix(v.idio_logvar);
  put_sv(p, v.factor_params);
  put_sv(p, v.idio_params);
  p.put<std::uint64_t>(v.constant_variance.size());
  for (bool b : v.constant_variance) p.put<std::uint8_t>(b ? 1 : 0);
  p.put(st.btau_scale);
  p.put<std::int64_t>(st.btau_accepted);
  p.put<std::int64_t>(st.btau_proposed);
  p.put<std::int64_t>(st.window_accepted);
  p.put<std::int64_t>(st.window_proposed);
  p.put<std::uint64_t>(draws.size());
  for (const auto& dr : draws) {
    put_coeffs(p, dr.coefficients);
    p.put_matrix(dr.loadings);
    put_sv(p, dr.factor_params);
    put_sv(p, dr.idio_params);
    p.put_matrix(dr.xi_bar);
    p.put(dr.log_likelihood);
  }

  ByteWriter out;
  for (char c : kCheckpointMagic) out.put(c);
  out.put(kCheckpointVersion);
  out.put(spec_hash(d.spec));
  out.put(data_hash(d));
  out.put(chain_hash(cfg, priors));
  out.put<std::uint64_t>(p.bytes().size());
  out.put(fnv1a(p.bytes().data(), p.bytes().size()));
  std::vector<char> bytes = out.bytes();
  bytes.insert(bytes.end(), p.bytes().begin(), p.bytes().end());
  const std::string tmp = path + ".tmp";
  write_file(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

struct Checkpoint {
  ChainState state;
  std::vector<StoredDraw> draws;
  Rng rng;
};

inline Checkpoint read_checkpoint(const std::string& path, const RegressionDesign& d, const ChainConfig& cfg,
                                  const GibbsPriors& priors) {
  using namespace gibbs_detail;
  const std::vector<char> bytes = read_file(path);
  auto refuse = [&](const std::string& why) -> void {
    fail(ErrorKind::data, "refusing to resume from checkpoint '" + path + "': " + why);
  };
  constexpr std::size_t header = 8 + 4 + 8 * 5;
  if (bytes.size() < header) refuse("file is truncated");
  ByteReader h(bytes.data(), header);
  for (char c : kCheckpointMagic) {
    if (h.get<char>() != c) refuse("bad magic number");
  }
  if (h.get<std::uint32_t>() != kCheckpointVersion) refuse("unsupported format version");
  if (h.get<std::uint64_t>() != spec_hash(d.spec)) refuse("model spec hash mismatch");
  if (h.get<std::uint64_t>() != data_hash(d)) refuse("data hash mismatch");
  if (h.get<std::uint64_t>() != chain_hash(cfg, priors)) refuse("chain configuration hash mismatch");
  const auto size = h.get<std::uint64_t>();
  const auto checksum = h.get<std::uint64_t>();
  if (bytes.size() != header + size) refuse("payload length mismatch");
  if (fnv1a(bytes.data() + header, size) != checksum) refuse("payload checksum mismatch");

  Checkpoint ck;
  try {
    ByteReader p(bytes.data() + header, size);
    ck.rng.restore(p.get_string());
    ChainState& st = ck.state;
    st.sweep = p.get<std::int64_t>();
    st.coefficients = get_coeffs(p, d.spec);
    st.shrinkage.tau = p.get_vector();
    st.shrinkage.lambda = p.get<double>();
    st.shrinkage.b = p.get<double>();
    st.shrinkage.d0 = p.get<double>();
    st.shrinkage.d1 = p.get<double>();
    st.pooling.mu = p.get_vector();
    st.pooling.v = p.get_vector();
    st.pooling.mu0 = p.get_vector();
    st.pooling.V0 = p.get_vector();
    st.pooling.dv0 = p.get<double>();
    st.pooling.dv1 = p.get<double>();
    VolatilityState& v = st.volatility;
    v.loadings = p.get_matrix();
    v.factors = p.get_matrix();
    v.factor_logvar = p.get_matrix();
    v.idio_logvar = p.get_matrix();
    v.factor_params = get_sv(p);
    v.idio_params = get_sv(p);
    v.constant_variance.resize(p.get<std::uint64_t>());
    for (std::size_t i = 0; i < v.constant_variance.size(); ++i) v.constant_variance[i] = p.get<std::uint8_t>() != 0;
    st.btau_scale = p.get<double>();
    st.btau_accepted = p.get<std::int64_t>();
    st.btau_proposed = p.get<std::int64_t>();
    st.window_accepted = p.get<std::int64_t>();
    st.window_proposed = p.get<std::int64_t>();
    ck.draws.resize(p.get<std::uint64_t>());
    for (auto& dr : ck.draws) {
      dr.coefficients = get_coeffs(p, d.spec);
      dr.loadings = p.get_matrix();
      dr.factor_params = get_sv(p);
      dr.idio_params = get_sv(p);
      dr.xi_bar = p.get_matrix();
      dr.log_likelihood = p.get<double>();
    }
    if (!p.done()) refuse("trailing bytes in payload");
  } catch (const Error& e) {
    refuse(e.what());
  }
  return ck;
}

// ---------------------------------------------------------------------------

struct ChainOptions {
  std::string checkpoint_path;  // empty: no checkpoints
  bool resume = false;          // continue from checkpoint_path if it exists
  long stop_after = 0;          // > 0: stop once this many sweeps are done (for interrupted runs)
};

inline DrawStore run_chain(const ChainConfig& cfg, const RegressionDesign& d, const GibbsPriors& priors,
                           const ChainOptions& opts = {}) {
  if (const auto problems = validate_chain(cfg); !problems.empty()) {
    fail(ErrorKind::config, "invalid chain config: " + problems.front());
  }
  require_valid(d.spec);

  Rng rng(cfg.seed);
  ChainState st;
  std::vector<StoredDraw> draws;
  if (opts.resume && !opts.checkpoint_path.empty() && std::filesystem::exists(opts.checkpoint_path)) {
    Checkpoint ck = read_checkpoint(opts.checkpoint_path, d, cfg, priors);
    st = std::move(ck.state);
    draws = std::move(ck.draws);
    rng = ck.rng;
  } else {
    st = initialize_state(d, priors, rng);
  }
  draws.reserve(static_cast<std::size_t>(cfg.retained()));

  while (st.sweep < cfg.total) {
    gibbs_sweep(st, d, priors, rng, st.sweep < cfg.burn_in);
    const long done = st.sweep;
    if (done > cfg.burn_in && (done - cfg.burn_in) % cfg.thin == 0) draws.push_back(snapshot(st, d));
    const bool at_interval = cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0;
    const bool stopping = opts.stop_after > 0 && done >= opts.stop_after && done < cfg.total;
    if (!opts.checkpoint_path.empty() && (at_interval || stopping)) {
      write_checkpoint(opts.checkpoint_path, st, draws, rng, d, cfg, priors);
    }
    if (stopping) break;
  }

  DrawStore store;
  store.spec = d.spec;
  store.config = cfg;
  store.priors = priors;
  store.draws = std::move(draws);
  store.btau_acceptance =
      st.btau_proposed > 0 ? static_cast<double>(st.btau_accepted) / static_cast<double>(st.btau_proposed) : 0.0;
  store.btau_scale = st.btau_scale;
  return store;
}

// ---------------------------------------------------------------------------
// DIC = 2 mean(D) - D(posterior mean), D = -2 log-likelihood given the
// coefficients and the time-averaged covariance.

inline double compute_dic(const DrawStore& store, const RegressionDesign& d) {
  if (store.draws.empty()) fail(ErrorKind::numerical, "DIC needs at least one retained draw");
  double mean_dev = 0.0;
  CoefficientState mean_coef = CoefficientState::zeros(store.spec);
  Eigen::MatrixXd mean_xi = Eigen::MatrixXd::Zero(store.spec.K(), store.spec.K());
  for (std::size_t i = 0; i < store.draws.size(); ++i) {
    const StoredDraw& dr = store.draws[i];
    if (!std::isfinite(dr.log_likelihood)) {
      fail(ErrorKind::numerical, "DIC: non-finite log-likelihood in retained draw " + std::to_string(i));
    }
    mean_dev += -2.0 * dr.log_likelihood;
    mean_coef += dr.coefficients;
    mean_xi += dr.xi_bar;
  }
  const double n = static_cast<double>(store.draws.size());
  mean_dev /= n;
  mean_coef *= 1.0 / n;
  mean_xi /= n;
  const double dev_at_mean = -2.0 * conditional_log_likelihood(d, mean_coef, mean_xi);
  if (!std::isfinite(dev_at_mean)) fail(ErrorKind::numerical, "DIC: non-finite deviance at the posterior mean");
  return 2.0 * mean_dev - dev_at_mean;
}

}  // namespace hfgvar
