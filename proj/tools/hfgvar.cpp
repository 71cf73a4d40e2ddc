#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "hfgvar/cli.hpp"

int main(int argc, char** argv) {
  using namespace hfgvar;
  CLI::App app{"Multi-country Bayesian VAR with factor stochastic volatility"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> data;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "run config (JSON)")->required();
    sub->add_option("--seed", seed, "override chain.seed");
    sub->add_option("-o,--out", out, "override the output directory");
    sub->add_option("--data", data, "override the data directory");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a synthetic panel and write data CSVs plus truth.json");
  common(simulate);
  auto* estimate = app.add_subcommand("estimate", "run the Gibbs sampler and write the draw store");
  common(estimate);
  bool resume = false;
  long stop_after = 0;
  estimate->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
  estimate->add_option("--stop-after", stop_after, "stop after this many sweeps, leaving a checkpoint");
  auto* identify = app.add_subcommand("identify", "run the rotation search on every retained draw");
  common(identify);
  auto* irf = app.add_subcommand("irf", "identify every draw and write impulse-response quantiles");
  common(irf);
  auto* dic = app.add_subcommand("dic", "deviance information criterion for the store or a factor grid");
  common(dic);
  std::vector<int> grid;
  dic->add_option("--grid", grid, "factor counts to estimate and compare")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  try {
    const RunConfig cfg = load_run_config(config, {seed, out, data});
    if (simulate->parsed()) {
      const SimulateResult r = cmd_simulate(cfg);
      std::cout << "wrote " << r.truth.periods << " periods to " << r.directory.string() << '\n';
    } else if (estimate->parsed()) {
      const DrawStore store = cmd_estimate(cfg, {resume, stop_after});
      std::cout << "retained " << store.draws.size() << " draws; b_tau acceptance " << store.btau_acceptance << '\n';
    } else if (identify->parsed()) {
      std::cout << cmd_identify(cfg).dump(2) << '\n';
    } else if (irf->parsed()) {
      std::cout << cmd_irf(cfg).dump(2) << '\n';
    } else if (dic->parsed()) {
      std::cout << cmd_dic(cfg, grid).dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (data): " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}
