#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "hfgvar/cli.hpp"
#include "test_util.hpp"

using namespace hfgvar;
namespace fs = std::filesystem;

namespace {

const char* kTable1 = R"({
  "shocks": ["MP_US", "CBI_US", "MP_EA", "CBI_EA"],
  "rows": [
    {"variable": "US.rate_surprise",  "cells": {"MP_US": "+", "CBI_US": "+", "MP_EA": "0", "CBI_EA": "0", "Other": "0"}},
    {"variable": "US.stock_surprise", "cells": {"MP_US": "-", "CBI_US": "+", "MP_EA": "0", "CBI_EA": "0", "Other": "0"}},
    {"variable": "EA.rate_surprise",  "cells": {"MP_US": "0", "CBI_US": "0", "MP_EA": "+", "CBI_EA": "+", "Other": "0"}},
    {"variable": "EA.stock_surprise", "cells": {"MP_US": "0", "CBI_US": "0", "MP_EA": "-", "CBI_EA": "+", "Other": "0"}},
    {"variable": "agg.US_short_rate", "cells": {"MP_US": "+", "CBI_US": "+"}},
    {"variable": "agg.US_stocks",     "cells": {"MP_US": "-", "CBI_US": "+"}},
    {"variable": "agg.EA_short_rate", "cells": {"MP_EA": "+", "CBI_EA": "+"}},
    {"variable": "agg.EA_stocks",     "cells": {"MP_EA": "-", "CBI_EA": "+"}}
  ]
})";

const char* kUnrestricted = R"({"shocks": ["MP_US", "CBI_US", "MP_EA", "CBI_EA"], "rows": []})";

const char* kInfeasible = R"({
  "shocks": ["MP_US", "CBI_US", "MP_EA", "CBI_EA"],
  "rows": [
    {"variable": "US.rate_surprise", "cells": {"MP_US": "0", "CBI_US": "0", "MP_EA": "0", "CBI_EA": "0", "Other": "0"}}
  ]
})";

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  nlohmann::json j;
  in >> j;
  return j;
}

nlohmann::json base_config() {
  return nlohmann::json::parse(R"({
    "model": {"n_countries": 2, "k_country": 2, "m_surprise": 2, "k_aggregate_low_freq": 4,
              "lag_domestic": 1, "lag_foreign": 1, "lag_aggregate_in_country": 1, "n_factors": 4},
    "chain": {"total": 200, "burn_in": 100, "thin": 5, "seed": 11},
    "simulate": {"periods": 120, "compliant_identification": true},
    "data": {"directory": "data", "standardize": true},
    "identification": {"restrictions": "table1.json", "max_attempts": 10000, "zero_tol": 0.1},
    "irf": {"horizon": 6, "quantiles": [0.16, 0.5, 0.84], "units": "original"},
    "output": "out",
    "workers": 1
  })");
}

// Scratch project with a config file and the restriction tables next to it.
fs::path make_project(const std::string& name, const nlohmann::json& cfg) {
  const fs::path dir = testutil::scratch_dir(name);
  write_text(dir / "config.json", cfg.dump(2));
  write_text(dir / "table1.json", kTable1);
  write_text(dir / "unrestricted.json", kUnrestricted);
  write_text(dir / "infeasible.json", kInfeasible);
  return dir;
}

RunConfig config_in(const fs::path& dir, const ConfigOverrides& o = {}) {
  return load_run_config((dir / "config.json").string(), o);
}

struct CsvRow {
  std::string shock, variable;
  int horizon;
  double q16, q50, q84;
};

std::vector<CsvRow> read_irf_csv(const fs::path& p, std::string* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (header != nullptr) *header = line;
  std::vector<CsvRow> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string f[7];
    for (auto& s : f) std::getline(ss, s, ',');
    out.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
  }
  return out;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HFGVAR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One simulate + estimate shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(make_project("pipeline", base_config()));
    const RunConfig c = config_in(*dir_);
    cmd_simulate(c);
    store_ = new DrawStore(cmd_estimate(c));
  }
  static void TearDownTestSuite() {
    delete store_;
    delete dir_;
  }
  static fs::path* dir_;
  static DrawStore* store_;
};
fs::path* Pipeline::dir_ = nullptr;
DrawStore* Pipeline::store_ = nullptr;

}  // namespace

TEST(RunConfig, ParsesDefaultsAndOverrides) {
  const fs::path dir = make_project("cfg", base_config());
  const RunConfig c = config_in(dir);
  EXPECT_EQ(c.spec.K(), 4 + 4 + 2 * 2);
  EXPECT_EQ(c.chain.retained(), 20);
  EXPECT_EQ(c.horizon, 6);
  EXPECT_TRUE(c.original_units);
  EXPECT_EQ(c.output_dir(), dir / "out");

  const RunConfig o = config_in(dir, {std::uint64_t{99}, (dir / "elsewhere").string(), std::nullopt});
  EXPECT_EQ(o.chain.seed, 99u);
  EXPECT_EQ(o.output_dir(), dir / "elsewhere");
  EXPECT_NE(o.hash(), c.hash());
}

TEST(RunConfig, HashIgnoresOutputLocation) {
  const fs::path dir = make_project("hash", base_config());
  const RunConfig a = config_in(dir);
  const RunConfig b = config_in(dir, {std::nullopt, (dir / "other").string(), std::nullopt});
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(RunConfig, InvalidFieldsAreConfigErrors) {
  const std::vector<std::pair<std::string, nlohmann::json>> edits{
      {"/irf/units", "furlongs"},
      {"/irf/quantiles", nlohmann::json::array({0.5, 1.5})},
      {"/irf/horizon", -1},
      {"/identification/max_attempts", 0},
      {"/identification/zero_tol", -0.1},
      {"/chain/thin", 0},
      {"/model/n_countries", 0},
      {"/workers", -2},
  };
  for (const auto& [ptr, value] : edits) {
    nlohmann::json j = base_config();
    j[nlohmann::json::json_pointer(ptr)] = value;
    EXPECT_EQ(testutil::error_kind_of([&] { parse_run_config(j, "/tmp"); }), ErrorKind::config) << ptr;
  }
  nlohmann::json j = base_config();
  j["model"]["n_countries"] = "three";
  EXPECT_NE(testutil::error_message_of([&] { parse_run_config(j, "/tmp"); }).find("malformed run config"),
            std::string::npos);
  EXPECT_EQ(testutil::error_kind_of([] { load_run_config("/nonexistent/config.json"); }), ErrorKind::config);
}

TEST(Simulate, DeterministicFiles) {
  const fs::path a = make_project("a", base_config());
  const fs::path b = make_project("b", base_config());
  cmd_simulate(config_in(a));
  cmd_simulate(config_in(b));
  for (const char* f : {"surprises.csv", "aggregate.csv", "country_01.csv", "country_02.csv", "weights_gdp.csv",
                        "weights_exports.csv", "truth.json"}) {
    ASSERT_TRUE(fs::exists(a / "data" / f)) << f;
    EXPECT_EQ(read_text(a / "data" / f), read_text(b / "data" / f)) << f;
  }
}

TEST(Simulate, TruthRecordRoundTrip) {
  const fs::path dir = make_project("truth", base_config());
  const SimulateResult first = cmd_simulate(config_in(dir));
  nlohmann::json cfg = base_config();
  cfg["simulate"]["truth"] = "data/truth.json";
  cfg["data"]["directory"] = "data2";
  write_text(dir / "config.json", cfg.dump(2));
  const SimulateResult second = cmd_simulate(config_in(dir));
  EXPECT_EQ(second.panel.y, first.panel.y);
  EXPECT_EQ(read_text(dir / "data" / "surprises.csv"), read_text(dir / "data2" / "surprises.csv"));
}

TEST(Simulate, ZeroCoefficientMoments) {
  ModelSpec s = ModelSpec::make(2, 2, 2, 4, 1, 1, 1, 4);
  RandomTruthOptions o;
  o.periods = 20000;
  o.sv_scale = 0.0;
  TruthRecord t = random_truth(s, 3, o);
  t.coefficients = CoefficientState::zeros(s);
  for (auto& p : t.factor_sv) p.scale = 0.0;
  for (auto& p : t.idio_sv) p.scale = 0.0;
  const SimulatedPanel p = simulate(t, 4);

  Eigen::VectorXd idio(s.K());
  for (int i = 0; i < s.K(); ++i) idio(i) = std::exp(t.idio_sv[i].level);
  Eigen::VectorXd fvar(s.n_factors);
  for (int i = 0; i < s.n_factors; ++i) fvar(i) = std::exp(t.factor_sv[i].level);
  const Eigen::MatrixXd expected =
      t.loadings * fvar.asDiagonal() * t.loadings.transpose() + Eigen::MatrixXd(idio.asDiagonal());

  const Eigen::MatrixXd centered = p.y.rowwise() - p.y.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (p.y.rows() - 1.0);
  for (int i = 0; i < s.K(); ++i) {
    EXPECT_NEAR(p.y.col(i).mean(), 0.0, 4.0 * std::sqrt(expected(i, i) / p.y.rows())) << i;
    for (int j = 0; j < s.K(); ++j) {
      const double se = std::sqrt((expected(i, i) * expected(j, j) + expected(i, j) * expected(i, j)) / p.y.rows());
      EXPECT_NEAR(cov(i, j), expected(i, j), 5.0 * se) << i << "," << j;
    }
  }
}

TEST(Simulate, SurprisesAreUnpredictable) {
  ModelSpec s = ModelSpec::make(2, 2, 2, 4, 1, 1, 1, 4);
  RandomTruthOptions o;
  o.periods = 5000;
  const TruthRecord t = random_truth(s, 8, o);
  const SimulatedPanel p = simulate(t, 9);
  const Eigen::Index T = p.y.rows();
  Eigen::MatrixXd X(T - 1, s.K() + 1);
  X.col(0).setOnes();
  X.rightCols(s.K()) = p.y.topRows(T - 1);
  for (int i = 0; i < s.n_surprises(); ++i) {
    const Eigen::VectorXd y = p.y.col(i).tail(T - 1);
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd resid = y - X * beta;
    const double sigma2 = resid.squaredNorm() / (T - 1.0 - X.cols());
    const Eigen::VectorXd se = (sigma2 * (X.transpose() * X).inverse().diagonal()).cwiseSqrt();
    for (Eigen::Index c = 1; c < X.cols(); ++c) EXPECT_LT(std::abs(beta(c)), 4.5 * se(c)) << i << " on " << c - 1;
  }
}

TEST(Simulate, ExplosiveTruthIsRejected) {
  ModelSpec s = ModelSpec::make(2, 2, 1, 2, 1, 1, 1, 2);
  TruthRecord t = random_truth(s, 1);
  t.coefficients.country[0].block(0, 1, 2, 2) = 1.5 * Eigen::MatrixXd::Identity(2, 2);
  EXPECT_GE(stacked_spectral_radius(t), 1.0);
  const std::string msg = testutil::error_message_of([&] { simulate(t, 1); });
  EXPECT_NE(msg.find("explosive"), std::string::npos) << msg;
  EXPECT_EQ(testutil::error_kind_of([&] { simulate(t, 1); }), ErrorKind::numerical);
}

TEST_F(Pipeline, RetainedCountAndOutputs) {
  const RunConfig c = config_in(*dir_);
  EXPECT_EQ(static_cast<long>(store_->draws.size()), (200 - 100) / 5);
  EXPECT_TRUE(fs::exists(c.store_dir() / "manifest.json"));
  const nlohmann::json run = read_json(c.output_dir() / "run.json");
  EXPECT_EQ(run.at("config_hash"), c.hash());
  EXPECT_TRUE(run.at("complete").get<bool>());
  EXPECT_EQ(run.at("retained"), 20);
  for (const auto& d : store_->draws) {
    EXPECT_TRUE(d.xi_bar.allFinite());
    EXPECT_TRUE(std::isfinite(d.log_likelihood));
  }
}

TEST_F(Pipeline, StoreRoundTrip) {
  const RunConfig c = config_in(*dir_);
  const LoadedStore ls = read_draw_store(c.store_dir().string());
  ASSERT_EQ(ls.store.draws.size(), store_->draws.size());
  EXPECT_TRUE(ls.store.spec == store_->spec);
  for (std::size_t i = 0; i < ls.store.draws.size(); ++i) {
    EXPECT_EQ(encode_draw(ls.store.draws[i]), encode_draw(store_->draws[i])) << i;
  }
  EXPECT_EQ(ls.meta.config_hash, c.hash());
  EXPECT_EQ(ls.variable_ids(), default_variable_ids(c.spec));
  for (const auto& v : ls.meta.variables) EXPECT_GT(v.sd, 0.0);
}

TEST_F(Pipeline, RerunGivesIdenticalStore) {
  const fs::path other = testutil::scratch_dir("rerun");
  const RunConfig c = config_in(*dir_, {std::nullopt, other.string(), std::nullopt});
  cmd_estimate(c);
  const fs::path a = config_in(*dir_).store_dir();
  const fs::path b = c.store_dir();
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  ASSERT_FALSE(names.empty());
  for (const auto& n : names) EXPECT_EQ(read_text(a / n), read_text(b / n)) << n;
}

TEST_F(Pipeline, UnrestrictedTableAcceptsEveryDraw) {
  nlohmann::json cfg = base_config();
  cfg["identification"]["restrictions"] = "unrestricted.json";
  const RunConfig c = parse_run_config(cfg, *dir_);
  const nlohmann::json stats = cmd_identify(c);
  EXPECT_DOUBLE_EQ(stats.at("acceptance_rate").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(stats.at("mean_attempts").get<double>(), 1.0);
  EXPECT_EQ(stats.at("config_hash"), c.hash());
  EXPECT_TRUE(fs::exists(c.output_dir() / "identification.json"));
}

TEST_F(Pipeline, IrfCsvShapeAndMetadata) {
  nlohmann::json cfg = base_config();
  cfg["identification"]["restrictions"] = "unrestricted.json";
  cfg["output"] = "out_unrestricted";
  const RunConfig c = parse_run_config(cfg, *dir_);
  fs::create_directories(c.output_dir());
  fs::copy(config_in(*dir_).store_dir(), c.store_dir(), fs::copy_options::recursive);
  const nlohmann::json meta = cmd_irf(c);
  std::string header;
  const auto rows = read_irf_csv(c.output_dir() / "irf.csv", &header);
  EXPECT_EQ(header, "shock,variable,horizon,q16,q50,q84,unit");
  EXPECT_EQ(static_cast<long>(rows.size()), 4L * c.spec.K() * (c.horizon + 1));
  EXPECT_EQ(meta.at("rows"), static_cast<long>(rows.size()));
  EXPECT_EQ(meta.at("included").get<long>() + meta.at("explosive_excluded").get<long>(), 20);
  EXPECT_EQ(meta.at("config_hash"), c.hash());
  for (const auto& r : rows) {
    EXPECT_LE(r.q16, r.q50);
    EXPECT_LE(r.q50, r.q84);
  }
}

TEST_F(Pipeline, CompliantTruthMatchesTableSigns) {
  const RunConfig c = config_in(*dir_);
  const nlohmann::json meta = cmd_irf(c);
  EXPECT_GT(meta.at("acceptance_rate").get<double>(), 0.0);
  const RestrictionTable table = parse_restriction_table(nlohmann::json::parse(kTable1), default_variable_ids(c.spec));
  const auto rows = read_irf_csv(c.output_dir() / "irf.csv");
  const auto ids = default_variable_ids(c.spec);
  int checked = 0;
  for (const auto& cell : table.cells) {
    if (cell.shock == RestrictionTable::kOther || cell.sign == Sign::zero) continue;
    for (const auto& r : rows) {
      if (r.horizon != 0 || r.variable != ids[cell.variable] || r.shock != table.shocks[cell.shock]) continue;
      EXPECT_EQ(r.q50 > 0.0, cell.sign == Sign::positive) << r.shock << " on " << r.variable;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 16);
}

TEST_F(Pipeline, IrfIsReproducible) {
  nlohmann::json cfg = base_config();
  cfg["output"] = "out_repeat";
  const RunConfig c = parse_run_config(cfg, *dir_);
  fs::create_directories(c.output_dir());
  fs::copy(config_in(*dir_).store_dir(), c.store_dir(), fs::copy_options::recursive);
  cmd_irf(c);
  const std::string first = read_text(c.output_dir() / "irf.csv");
  cmd_irf(c);
  EXPECT_EQ(read_text(c.output_dir() / "irf.csv"), first);
}

TEST_F(Pipeline, InfeasibleTableIsIdentificationError) {
  nlohmann::json cfg = base_config();
  cfg["identification"]["restrictions"] = "infeasible.json";
  cfg["identification"]["max_attempts"] = 20;
  const RunConfig c = parse_run_config(cfg, *dir_);
  const std::string msg = testutil::error_message_of([&] { cmd_identify(c); });
  EXPECT_NE(msg.find("20 attempts"), std::string::npos) << msg;
  EXPECT_EQ(testutil::error_kind_of([&] { cmd_irf(c); }), ErrorKind::identification);
}

TEST_F(Pipeline, DicForStore) {
  const RunConfig c = config_in(*dir_);
  const nlohmann::json out = cmd_dic(c);
  ASSERT_EQ(out.at("entries").size(), 1u);
  EXPECT_TRUE(std::isfinite(out.at("entries")[0].at("dic").get<double>()));
  EXPECT_EQ(out.at("selected_factors"), 4);
  EXPECT_EQ(out.at("config_hash"), c.hash());
}

TEST(Dic, SelectsMinimum) {
  EXPECT_EQ(select_by_dic({{1, 10.0}, {2, 7.5}, {3, 9.0}}), 2);
  EXPECT_EQ(testutil::error_kind_of([] { select_by_dic({}); }), ErrorKind::config);
}

TEST(Commands, MissingStoreIsConfigError) {
  const fs::path dir = make_project("nostore", base_config());
  const std::string msg = testutil::error_message_of([&] { cmd_identify(config_in(dir)); });
  EXPECT_NE(msg.find("run estimate first"), std::string::npos) << msg;
}

TEST(Commands, WrongColumnCountIsDataError) {
  const fs::path dir = make_project("cols", base_config());
  const RunConfig c = config_in(dir);
  cmd_simulate(c);
  nlohmann::json cfg = base_config();
  cfg["model"]["k_country"] = 3;
  const RunConfig wrong = parse_run_config(cfg, dir);
  const std::string msg = testutil::error_message_of([&] { load_data(wrong); });
  EXPECT_NE(msg.find("expected k = 3"), std::string::npos) << msg;
}

TEST(Binary, ExitCodes) {
  const fs::path dir = make_project("exit", base_config());
  const fs::path log = dir / "log.txt";
  const std::string cfg = (dir / "config.json").string();

  EXPECT_EQ(run_cli("frobnicate", log), 2);
  EXPECT_EQ(run_cli("estimate -c " + (dir / "missing.json").string(), log), 2);
  write_text(dir / "broken.json", "{ not json");
  EXPECT_EQ(run_cli("estimate -c " + (dir / "broken.json").string(), log), 2);

  ASSERT_EQ(run_cli("simulate -c " + cfg, log), 0) << read_text(log);

  std::string bad = read_text(dir / "data" / "country_01.csv");
  bad.replace(bad.rfind(',') + 1, 1, "x");
  write_text(dir / "data" / "country_01.csv", bad);
  EXPECT_EQ(run_cli("estimate -c " + cfg, log), 3) << read_text(log);
  EXPECT_NE(read_text(log).find("error (data error)"), std::string::npos);

  ASSERT_EQ(run_cli("simulate -c " + cfg, log), 0);
  ASSERT_EQ(run_cli("estimate -c " + cfg, log), 0) << read_text(log);
  nlohmann::json j = base_config();
  j["identification"]["restrictions"] = "infeasible.json";
  j["identification"]["max_attempts"] = 5;
  write_text(dir / "infeasible_config.json", j.dump());
  EXPECT_EQ(run_cli("identify -c " + (dir / "infeasible_config.json").string(), log), 5) << read_text(log);
  EXPECT_EQ(run_cli("irf -c " + cfg, log), 0) << read_text(log);
  EXPECT_TRUE(fs::exists(dir / "out" / "irf.csv"));
}
