#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hfgvar/data_ingest.hpp"
#include "hfgvar/error.hpp"
#include "hfgvar/gibbs.hpp"
#include "hfgvar/identification.hpp"
#include "hfgvar/irf.hpp"
#include "hfgvar/model_core.hpp"
#include "hfgvar/simulate.hpp"
#include "hfgvar/store.hpp"

namespace hfgvar {

namespace fs = std::filesystem;

// One JSON document drives every subcommand. Relative paths resolve against
// the directory holding the config file.
struct RunConfig {
  fs::path base;
  nlohmann::json raw;

  ModelSpec spec;
  ChainConfig chain;
  GibbsPriors priors;

  std::string data_dir;                       // standard file names when `blocks` is empty
  std::vector<std::string> blocks;            // stacked order
  std::map<std::string, std::string> transforms;
  bool standardize = true;
  std::string weights_aggregate;
  std::string weights_countries;
  std::string events;  // raw event CSV; replaces surprises.csv when set

  std::string truth;  // simulate: truth record to load; empty draws a random one
  int simulate_periods = 216;
  bool simulate_compliant = false;

  std::string restrictions;
  long max_attempts = 10000;
  double zero_tol = 0.1;

  int horizon = 36;
  std::vector<double> quantiles{0.16, 0.5, 0.84};
  bool original_units = true;

  std::string output = "out";
  int workers = 0;  // 0: available cores

  fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : base / p; }
  fs::path output_dir() const { return resolve(output); }
  fs::path store_dir() const { return output_dir() / "store"; }

  std::vector<fs::path> block_paths() const {
    std::vector<fs::path> out;
    if (!blocks.empty()) {
      for (const auto& b : blocks) out.push_back(resolve(b));
      return out;
    }
    const fs::path dir = resolve(data_dir);
    out.push_back(dir / "surprises.csv");
    out.push_back(dir / "aggregate.csv");
    for (int j = 1; j <= spec.n_countries; ++j) out.push_back(dir / country_file(j));
    return out;
  }
  fs::path aggregate_weights_path() const {
    return weights_aggregate.empty() ? resolve(data_dir) / "weights_gdp.csv" : resolve(weights_aggregate);
  }
  fs::path country_weights_path() const {
    return weights_countries.empty() ? resolve(data_dir) / "weights_exports.csv" : resolve(weights_countries);
  }

  static std::string country_file(int j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "country_%02d.csv", j);
    return buf;
  }

  // Hash of the effective config, output location excluded.
  std::string hash() const {
    nlohmann::json j = raw;
    j.erase("output");
    return hex64(fnv1a(j.dump()));
  }

  int worker_count() const {
    if (workers > 0) return workers;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base) {
  RunConfig c;
  c.base = base;
  c.raw = j;
  try {
    c.spec = j.at("model").get<ModelSpec>();
    if (j.contains("chain")) c.chain = j.at("chain").get<ChainConfig>();
    if (j.contains("priors")) c.priors = j.at("priors").get<GibbsPriors>();
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data_dir = d.value("directory", std::string("data"));
      c.blocks = d.value("blocks", std::vector<std::string>{});
      c.transforms = d.value("transforms", std::map<std::string, std::string>{});
      c.standardize = d.value("standardize", true);
      c.weights_aggregate = d.value("weights_aggregate", std::string{});
      c.weights_countries = d.value("weights_countries", std::string{});
      c.events = d.value("events", std::string{});
    } else {
      c.data_dir = "data";
    }
    if (j.contains("simulate")) {
      c.truth = j.at("simulate").value("truth", std::string{});
      c.simulate_periods = j.at("simulate").value("periods", c.simulate_periods);
      c.simulate_compliant = j.at("simulate").value("compliant_identification", false);
    }
    if (j.contains("identification")) {
      const auto& d = j.at("identification");
      c.restrictions = d.value("restrictions", std::string{});
      c.max_attempts = d.value("max_attempts", c.max_attempts);
      c.zero_tol = d.value("zero_tol", c.zero_tol);
    }
    if (j.contains("irf")) {
      const auto& d = j.at("irf");
      c.horizon = d.value("horizon", c.horizon);
      c.quantiles = d.value("quantiles", c.quantiles);
      const std::string units = d.value("units", std::string("original"));
      if (units != "original" && units != "standardized") {
        fail(ErrorKind::config, "irf.units must be 'original' or 'standardized'");
      }
      c.original_units = units == "original";
    }
    c.output = j.value("output", c.output);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed run config: ") + e.what());
  }
  require_valid(c.spec);
  if (const auto problems = validate_chain(c.chain); !problems.empty()) {
    fail(ErrorKind::config, "invalid chain config: " + problems.front());
  }
  if (c.max_attempts < 1) fail(ErrorKind::config, "identification.max_attempts must be >= 1");
  if (!(c.zero_tol >= 0.0)) fail(ErrorKind::config, "identification.zero_tol must be >= 0");
  if (c.horizon < 0) fail(ErrorKind::config, "irf.horizon must be >= 0");
  for (double q : c.quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::config, "irf.quantiles must lie in [0, 1]");
  }
  if (c.workers < 0) fail(ErrorKind::config, "workers must be >= 0");
  return c;
}

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> data_dir;
};

inline RunConfig load_run_config(const std::string& path, const ConfigOverrides& o = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  if (o.seed) j["chain"]["seed"] = *o.seed;
  if (o.output) j["output"] = fs::absolute(*o.output).string();
  if (o.data_dir) j["data"]["directory"] = fs::absolute(*o.data_dir).string();
  return parse_run_config(j, fs::absolute(path).parent_path());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Data

// Column ids follow the stacked layout: surprises, aggregate block, countries.
inline std::vector<std::string> default_variable_ids(const ModelSpec& s) {
  std::vector<std::string> out;
  const char* instruments[] = {"rate_surprise", "stock_surprise"};
  for (const char* region : {"US", "EA"}) {
    for (int i = 0; i < s.m_surprise; ++i) {
      out.push_back(std::string(region) + "." + (i < 2 ? instruments[i] : "surprise_" + std::to_string(i + 1)));
    }
  }
  const char* named[] = {"US_short_rate", "US_stocks", "EA_short_rate", "EA_stocks"};
  for (int i = 0; i < s.k_aggregate_low_freq; ++i) {
    out.push_back(std::string("agg.") + (s.k_aggregate_low_freq >= 4 && i < 4 ? named[i] : "y" + std::to_string(i + 1)));
  }
  for (int j = 1; j <= s.n_countries; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", j);
    for (int i = 0; i < s.k_country; ++i) out.push_back(std::string(buf) + ".y" + std::to_string(i + 1));
  }
  return out;
}

inline std::vector<std::string> country_labels(int n) {
  std::vector<std::string> out;
  for (int j = 1; j <= n; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", j);
    out.push_back(buf);
  }
  return out;
}

struct LoadedData {
  PanelDataset panel;
  WeightMatrix weights;
  RegressionDesign design;
};

inline LoadedData load_data(const RunConfig& c) {
  LoadedData out;
  std::vector<BlockTable> blocks;
  const auto paths = c.block_paths();
  for (std::size_t b = 0; b < paths.size(); ++b) {
    if (b == 0 && !c.events.empty()) continue;
    if (!fs::exists(paths[b])) fail(ErrorKind::config, "data file '" + paths[b].string() + "' does not exist");
    blocks.push_back(load_block_csv(paths[b].string()));
  }
  if (!c.events.empty()) {
    const fs::path ep = c.resolve(c.events);
    if (!fs::exists(ep)) fail(ErrorKind::config, "event file '" + ep.string() + "' does not exist");
    if (c.spec.m_surprise > 2) fail(ErrorKind::config, "event input supports at most two instruments per region");
    std::vector<Instrument> instruments{Instrument::rate_surprise, Instrument::stock_surprise};
    instruments.resize(c.spec.m_surprise);
    const BlockTable& ref = blocks.front();
    const MonthlySurprises ms = aggregate_surprises_to_monthly(load_events_csv(ep.string()), ref.periods.front(),
                                                               static_cast<int>(ref.periods.size()), instruments);
    blocks.insert(blocks.begin(), BlockTable{ms.periods, ms.columns, ms.values});
  }
  if (c.blocks.empty()) {
    const int expect[] = {c.spec.n_surprises(), c.spec.k_aggregate_low_freq};
    for (int b = 0; b < 2; ++b) {
      if (blocks[b].values.cols() != expect[b]) {
        fail(ErrorKind::data, c.block_paths()[b].string() + " has " + std::to_string(blocks[b].values.cols()) +
                                  " columns; expected " + std::to_string(expect[b]));
      }
    }
    for (int j = 1; j <= c.spec.n_countries; ++j) {
      if (blocks[j + 1].values.cols() != c.spec.k_country) {
        fail(ErrorKind::data, c.block_paths()[j + 1].string() + " has " +
                                  std::to_string(blocks[j + 1].values.cols()) + " columns; expected k = " +
                                  std::to_string(c.spec.k_country));
      }
    }
  }
  out.panel = assemble_panel(blocks, c.transforms, c.spec.K());
  if (c.standardize) out.panel = standardize(out.panel);

  for (const auto& p : {c.aggregate_weights_path(), c.country_weights_path()}) {
    if (!fs::exists(p)) fail(ErrorKind::config, "weights file '" + p.string() + "' does not exist");
  }
  const Eigen::MatrixXd agg = build_weights(WeightKind::gdp_share, load_flows_csv(c.aggregate_weights_path().string()));
  const Eigen::MatrixXd cty =
      build_weights(WeightKind::export_share, load_flows_csv(c.country_weights_path().string()));
  out.weights = combine_weights(agg, cty);
  out.design = build_design(c.spec, out.panel.values, out.weights);
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateResult {
  TruthRecord truth;
  SimulatedPanel panel;
  fs::path directory;
};

inline SimulateResult cmd_simulate(const RunConfig& c) {
  SimulateResult r;
  if (!c.truth.empty()) {
    const fs::path p = c.resolve(c.truth);
    std::ifstream in(p);
    if (!in) fail(ErrorKind::config, "cannot open truth record '" + p.string() + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, "truth record is not valid JSON: " + std::string(e.what()));
    }
    r.truth = truth_from_json(j);
    if (!(r.truth.spec == c.spec)) fail(ErrorKind::config, "truth record model does not match the config model");
  } else {
    RandomTruthOptions o;
    o.periods = c.simulate_periods;
    o.compliant_identification = c.simulate_compliant;
    r.truth = random_truth(c.spec, c.chain.seed, o);
  }
  r.panel = simulate(r.truth, c.chain.seed);

  const ModelSpec& s = c.spec;
  r.directory = c.resolve(c.data_dir);
  fs::create_directories(r.directory);
  const auto ids = default_variable_ids(s);
  const auto periods = month_range(r.truth.start_period, r.truth.periods);
  auto write_block = [&](const std::string& file, int offset, int width) {
    write_block_csv((r.directory / file).string(), periods,
                    std::vector<std::string>(ids.begin() + offset, ids.begin() + offset + width),
                    r.panel.y.middleCols(offset, width));
  };
  write_block("surprises.csv", 0, s.n_surprises());
  write_block("aggregate.csv", s.n_surprises(), s.k_aggregate_low_freq);
  for (int j = 1; j <= s.n_countries; ++j) write_block(RunConfig::country_file(j), s.country_offset(j), s.k_country);

  const auto labels = country_labels(s.n_countries);
  const Eigen::MatrixXd& w = r.truth.weights.matrix();
  write_flows_csv((r.directory / "weights_gdp.csv").string(), w.topRows(1), {"agg"}, labels, r.truth.start_period);
  write_flows_csv((r.directory / "weights_exports.csv").string(), w.bottomRows(s.n_countries), labels, labels,
                  r.truth.start_period);
  write_json(r.directory / "truth.json", truth_to_json(r.truth));
  return r;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
  bool resume = false;
  long stop_after = 0;
};

inline StoreMetadata store_metadata(const RunConfig& c, const LoadedData& d) {
  StoreMetadata meta;
  for (std::size_t i = 0; i < d.panel.columns.size(); ++i) {
    meta.variables.push_back({d.panel.columns[i], d.panel.transforms[i], d.panel.ledger.mean(i), d.panel.ledger.sd(i)});
  }
  meta.weights = d.weights;
  meta.config_hash = c.hash();
  return meta;
}

inline DrawStore cmd_estimate(const RunConfig& c, const EstimateOptions& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedData d = load_data(c);
  const auto t1 = std::chrono::steady_clock::now();
  fs::create_directories(c.output_dir());
  ChainOptions opts;
  if (c.chain.checkpoint_interval > 0 || o.resume || o.stop_after > 0) {
    opts.checkpoint_path = (c.output_dir() / "checkpoint.bin").string();
  }
  opts.resume = o.resume;
  opts.stop_after = o.stop_after;
  DrawStore store = run_chain(c.chain, d.design, c.priors, opts);
  const auto t2 = std::chrono::steady_clock::now();
  const bool complete = static_cast<long>(store.draws.size()) == c.chain.retained();
  if (complete) write_draw_store(c.store_dir().string(), store, store_metadata(c, d));
  const auto t3 = std::chrono::steady_clock::now();
  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  write_json(c.output_dir() / "run.json", {{"config_hash", c.hash()},
                                           {"seed", c.chain.seed},
                                           {"complete", complete},
                                           {"retained", store.draws.size()},
                                           {"expected_retained", c.chain.retained()},
                                           {"btau_acceptance", store.btau_acceptance},
                                           {"btau_scale", store.btau_scale},
                                           {"seconds_load", secs(t0, t1)},
                                           {"seconds_chain", secs(t1, t2)},
                                           {"seconds_write", secs(t2, t3)}});
  return store;
}

// ---------------------------------------------------------------------------
// identify / irf

struct DrawIdentification {
  bool accepted = false;
  bool explosive = false;
  long attempts = 0;
  IrfPath path;
};

struct IdentificationRun {
  std::vector<DrawIdentification> draws;
  long accepted = 0;
  long explosive = 0;
  long attempts = 0;
};

// Each draw uses its own RNG stream, so results do not depend on the worker
// count or on scheduling.
inline IdentificationRun identify_draws(const LoadedStore& ls, const RestrictionTable& table, const RunConfig& c,
                                        bool with_irf) {
  const ModelSpec& s = ls.store.spec;
  if (const auto problems = validate_table(table, s); !problems.empty()) {
    fail(ErrorKind::config, "invalid restriction table: " + problems.front());
  }
  const auto n = ls.store.draws.size();
  IdentificationRun run;
  run.draws.resize(n);

  auto work = [&](std::size_t i) {
    const StoredDraw& d = ls.store.draws[i];
    Rng rng = Rng::stream(c.chain.seed, i);
    const Eigen::MatrixXd Q = cholesky_lower(d.xi_bar);
    const SearchResult res = rotation_search(Q, table, s.m_surprise, c.zero_tol, c.max_attempts, rng);
    DrawIdentification& out = run.draws[i];
    out.attempts = res.attempts;
    out.accepted = res.draw.has_value();
    if (!out.accepted || !with_irf) return;
    const StackedSystem sys = assemble_stacked_system(d.coefficients, ls.meta.weights);
    out.path = propagate_irf(companion_form(sys.lags), res.draw->impact.leftCols(s.n_surprises()), c.horizon);
    out.explosive = out.path.explosive;
  };

  const int workers = std::min<int>(c.worker_count(), static_cast<int>(std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& d : run.draws) {
    run.accepted += d.accepted;
    run.explosive += d.explosive;
    run.attempts += d.attempts;
  }
  return run;
}

inline RestrictionTable load_table_for(const RunConfig& c, const LoadedStore& ls) {
  if (c.restrictions.empty()) fail(ErrorKind::config, "identification.restrictions is not set");
  const fs::path p = c.resolve(c.restrictions);
  if (!fs::exists(p)) fail(ErrorKind::config, "restriction table '" + p.string() + "' does not exist");
  return load_restriction_table(p.string(), ls.variable_ids());
}

inline LoadedStore load_store_for(const RunConfig& c) {
  if (!fs::exists(c.store_dir() / "manifest.json")) {
    fail(ErrorKind::config, "no draw store at '" + c.store_dir().string() + "'; run estimate first");
  }
  LoadedStore ls = read_draw_store(c.store_dir().string());
  if (ls.store.draws.empty()) fail(ErrorKind::data, "draw store holds no retained draws");
  return ls;
}

inline void require_accepted(const IdentificationRun& run, const RunConfig& c) {
  if (run.accepted > 0) return;
  fail(ErrorKind::identification, "no draw satisfied the restrictions within " + std::to_string(c.max_attempts) +
                                      " attempts (zero_tol " + std::to_string(c.zero_tol) +
                                      "); consider raising identification.max_attempts or zero_tol");
}

inline nlohmann::json identification_stats(const IdentificationRun& run, const RunConfig& c, const LoadedStore& ls) {
  const double n = static_cast<double>(run.draws.size());
  return {{"config_hash", c.hash()},
          {"store_config_hash", ls.meta.config_hash},
          {"draws", run.draws.size()},
          {"accepted", run.accepted},
          {"rejected", static_cast<long>(run.draws.size()) - run.accepted},
          {"acceptance_rate", run.accepted / n},
          {"mean_attempts", run.attempts / n},
          {"max_attempts", c.max_attempts},
          {"zero_tol", c.zero_tol}};
}

inline nlohmann::json cmd_identify(const RunConfig& c) {
  const LoadedStore ls = load_store_for(c);
  const RestrictionTable table = load_table_for(c, ls);
  const IdentificationRun run = identify_draws(ls, table, c, false);
  const nlohmann::json stats = identification_stats(run, c, ls);
  fs::create_directories(c.output_dir());
  write_json(c.output_dir() / "identification.json", stats);
  require_accepted(run, c);
  return stats;
}

inline nlohmann::json cmd_irf(const RunConfig& c) {
  const LoadedStore ls = load_store_for(c);
  const RestrictionTable table = load_table_for(c, ls);
  const IdentificationRun run = identify_draws(ls, table, c, true);
  require_accepted(run, c);

  IrfTensor tensor;
  for (const auto& d : run.draws) {
    if (!d.accepted) continue;
    if (d.explosive) {
      ++tensor.excluded;
      continue;
    }
    tensor.append(d.path);
  }
  if (tensor.draws == 0) {
    fail(ErrorKind::numerical, "every accepted draw produced explosive impulse responses");
  }
  if (c.original_units) {
    Eigen::VectorXd sd(ls.meta.variables.size());
    std::vector<Transform> transforms;
    for (std::size_t i = 0; i < ls.meta.variables.size(); ++i) {
      sd(i) = ls.meta.variables[i].sd;
      transforms.push_back(ls.meta.variables[i].transform);
    }
    tensor = rescale_to_units(std::move(tensor), sd, transforms, ls.variable_ids());
  }
  const IrfSummary summary = summarize(tensor, c.quantiles);
  fs::create_directories(c.output_dir());
  write_irf_csv((c.output_dir() / "irf.csv").string(), summary, table.shocks, ls.variable_ids());

  nlohmann::json meta = identification_stats(run, c, ls);
  meta["explosive_excluded"] = tensor.excluded;
  meta["included"] = tensor.draws;
  meta["horizon"] = c.horizon;
  meta["quantiles"] = c.quantiles;
  meta["shocks"] = table.shocks;
  meta["units"] = c.original_units ? "original" : "standardized";
  meta["rows"] = static_cast<long>(summary.shocks) * summary.variables * summary.horizons;
  write_json(c.output_dir() / "irf_meta.json", meta);
  return meta;
}

// ---------------------------------------------------------------------------
// dic

struct DicEntry {
  int factors;
  double dic;
};

inline int select_by_dic(const std::vector<DicEntry>& entries) {
  if (entries.empty()) fail(ErrorKind::config, "DIC grid is empty");
  return std::min_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.dic < b.dic; })
      ->factors;
}

inline std::vector<DicEntry> dic_grid(const RunConfig& c, const LoadedData& d, const std::vector<int>& grid) {
  std::vector<DicEntry> out;
  for (int f : grid) {
    ModelSpec s = c.spec;
    s.n_factors = f;
    require_valid(s);
    RegressionDesign design = d.design;
    design.spec = s;
    const DrawStore store = run_chain(c.chain, design, c.priors);
    out.push_back({f, compute_dic(store, design)});
  }
  return out;
}

inline nlohmann::json cmd_dic(const RunConfig& c, const std::vector<int>& grid = {}) {
  const LoadedData d = load_data(c);
  std::vector<DicEntry> entries;
  if (grid.empty()) {
    const LoadedStore ls = load_store_for(c);
    if (!(ls.store.spec == c.spec)) fail(ErrorKind::config, "draw store model does not match the config model");
    entries.push_back({c.spec.n_factors, compute_dic(ls.store, d.design)});
  } else {
    entries = dic_grid(c, d, grid);
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) rows.push_back({{"factors", e.factors}, {"dic", e.dic}});
  const nlohmann::json out{{"config_hash", c.hash()}, {"entries", rows}, {"selected_factors", select_by_dic(entries)}};
  fs::create_directories(c.output_dir());
  write_json(c.output_dir() / "dic.json", out);
  return out;
}

}  // namespace hfgvar
