#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hfgvar/binary_io.hpp"
#include "hfgvar/data_ingest.hpp"
#include "hfgvar/error.hpp"
#include "hfgvar/gibbs.hpp"
#include "hfgvar/simulate.hpp"

namespace hfgvar {

// Draw store directory:
//   manifest.json          dimensions, ordering, chain config, priors, variables, weights
//   draws/draw_NNNNNN.bin  one retained draw, float64 little-endian, row-major
// Record order inside a draw file: aggregate (l x J0), country 1..N (k x J
// each), loadings (K x F), xi_bar (K x K), factor SV params (F x 3: level,
// persistence, scale), idiosyncratic SV params (K x 3), log-likelihood (1 x 1).

struct VariableInfo {
  std::string id;
  Transform transform = Transform::pct;
  double mean = 0.0;
  double sd = 1.0;
};

struct StoreMetadata {
  std::vector<VariableInfo> variables;  // stacked order
  WeightMatrix weights;
  std::string config_hash;
};

struct LoadedStore {
  DrawStore store;
  StoreMetadata meta;

  std::vector<std::string> variable_ids() const {
    std::vector<std::string> out;
    for (const auto& v : meta.variables) out.push_back(v.id);
    return out;
  }
};

struct BlockLayout {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
};

inline std::vector<BlockLayout> draw_layout(const ModelSpec& s) {
  std::vector<BlockLayout> out{{"aggregate", s.l(), s.aggregate_regressors()}};
  for (int j = 1; j <= s.n_countries; ++j) out.push_back({"country_" + std::to_string(j), s.k_country, s.country_regressors()});
  out.push_back({"loadings", s.K(), s.n_factors});
  out.push_back({"xi_bar", s.K(), s.K()});
  out.push_back({"factor_sv", s.n_factors, 3});
  out.push_back({"idiosyncratic_sv", s.K(), 3});
  out.push_back({"log_likelihood", 1, 1});
  return out;
}

inline std::string draw_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "draw_%06zu.bin", index);
  return buf;
}

namespace store_detail {

inline Eigen::MatrixXd sv_matrix(const std::vector<SvParams>& ps) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ps.size()), 3);
  for (std::size_t i = 0; i < ps.size(); ++i) m.row(i) << ps[i].level, ps[i].persistence, ps[i].scale;
  return m;
}

inline std::vector<SvParams> sv_params(const Eigen::MatrixXd& m) {
  std::vector<SvParams> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = SvParams{m(i, 0), m(i, 1), m(i, 2)};
  return out;
}

}  // namespace store_detail

inline std::vector<double> encode_draw(const StoredDraw& d) {
  std::vector<double> out;
  append_row_major(out, d.coefficients.aggregate);
  for (const auto& c : d.coefficients.country) append_row_major(out, c);
  append_row_major(out, d.loadings);
  append_row_major(out, d.xi_bar);
  append_row_major(out, store_detail::sv_matrix(d.factor_params));
  append_row_major(out, store_detail::sv_matrix(d.idio_params));
  out.push_back(d.log_likelihood);
  return out;
}

inline StoredDraw decode_draw(const std::vector<double>& in, const ModelSpec& s) {
  std::size_t pos = 0;
  StoredDraw d;
  d.coefficients = CoefficientState::zeros(s);
  d.coefficients.aggregate = take_row_major(in, pos, s.l(), s.aggregate_regressors());
  for (auto& c : d.coefficients.country) c = take_row_major(in, pos, s.k_country, s.country_regressors());
  d.loadings = take_row_major(in, pos, s.K(), s.n_factors);
  d.xi_bar = take_row_major(in, pos, s.K(), s.K());
  d.factor_params = store_detail::sv_params(take_row_major(in, pos, s.n_factors, 3));
  d.idio_params = store_detail::sv_params(take_row_major(in, pos, s.K(), 3));
  d.log_likelihood = take_row_major(in, pos, 1, 1)(0, 0);
  if (pos != in.size()) fail(ErrorKind::data, "draw file has trailing values");
  return d;
}

inline void write_draw_store(const std::string& dir, const DrawStore& store, const StoreMetadata& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "draws");
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : meta.variables) {
    vars.push_back({{"id", v.id}, {"transform", transform_tag(v.transform)}, {"mean", v.mean}, {"sd", v.sd}});
  }
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& b : draw_layout(store.spec)) layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  std::vector<double> loglik;
  for (const auto& d : store.draws) loglik.push_back(d.log_likelihood);
  const nlohmann::json manifest{{"format", "hfgvar-draw-store"},
                                {"version", 1},
                                {"model", store.spec},
                                {"chain", store.config},
                                {"priors", store.priors},
                                {"retained", store.draws.size()},
                                {"btau_acceptance", store.btau_acceptance},
                                {"btau_scale", store.btau_scale},
                                {"variables", vars},
                                {"weights", matrix_json(meta.weights.matrix())},
                                {"config_hash", meta.config_hash},
                                {"encoding", "float64 little-endian, row-major"},
                                {"layout", layout},
                                {"log_likelihood", loglik}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) fail(ErrorKind::data, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';

  for (std::size_t i = 0; i < store.draws.size(); ++i) {
    const std::vector<double> v = encode_draw(store.draws[i]);
    const auto* p = reinterpret_cast<const char*>(v.data());
    write_file((fs::path(dir) / "draws" / draw_file_name(i)).string(), std::vector<char>(p, p + sizeof(double) * v.size()));
  }
}

inline LoadedStore read_draw_store(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) fail(ErrorKind::data, "draw store manifest '" + mpath.string() + "' not found");
  LoadedStore out;
  nlohmann::json m;
  try {
    in >> m;
    out.store.spec = m.at("model").get<ModelSpec>();
    out.store.config = m.at("chain").get<ChainConfig>();
    out.store.priors = m.at("priors").get<GibbsPriors>();
    out.store.btau_acceptance = m.value("btau_acceptance", 0.0);
    out.store.btau_scale = m.value("btau_scale", 0.0);
    for (const auto& v : m.at("variables")) {
      out.meta.variables.push_back({v.at("id").get<std::string>(), parse_transform(v.at("transform").get<std::string>()),
                                    v.at("mean").get<double>(), v.at("sd").get<double>()});
    }
    out.meta.weights = WeightMatrix(json_matrix(m.at("weights")));
    out.meta.config_hash = m.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, "malformed draw store manifest: " + std::string(e.what()));
  }
  require_valid(out.store.spec);
  if (static_cast<int>(out.meta.variables.size()) != out.store.spec.K()) {
    fail(ErrorKind::data, "draw store manifest lists " + std::to_string(out.meta.variables.size()) +
                              " variables; model has K = " + std::to_string(out.store.spec.K()));
  }
  const std::size_t n = m.at("retained").get<std::size_t>();
  std::size_t expected = 0;
  for (const auto& b : draw_layout(out.store.spec)) expected += static_cast<std::size_t>(b.rows * b.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string path = (fs::path(dir) / "draws" / draw_file_name(i)).string();
    const std::vector<char> bytes = read_file(path);
    if (bytes.size() != expected * sizeof(double)) {
      fail(ErrorKind::data, "draw file '" + path + "' has " + std::to_string(bytes.size()) + " bytes; expected " +
                                std::to_string(expected * sizeof(double)));
    }
    std::vector<double> v(expected);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    out.store.draws.push_back(decode_draw(v, out.store.spec));
  }
  return out;
}

}  // namespace hfgvar
