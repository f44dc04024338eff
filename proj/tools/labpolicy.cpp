#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "labpolicy/error.hpp"
#include "labpolicy/eval/config.hpp"
#include "labpolicy/eval/explain.hpp"
#include "labpolicy/eval/pipeline.hpp"
#include "labpolicy/numeric/rng.hpp"

using namespace labpolicy;
using namespace labpolicy::eval;
namespace fs = std::filesystem;
using numeric::derive_seed;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  bool oracle_future = false;
};

RunConfig load(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.oracle_future) cfg.eval.oracle_future = true;
  if (g.seed) cfg.eval.seeds = {*g.seed};
  cfg.validate();
  return cfg;
}

std::uint64_t seed_of(const Globals& g, const RunConfig& cfg) { return g.seed ? *g.seed : cfg.eval.seeds.front(); }

// Loads everything the named stage consumes from an earlier invocation.
void load_inputs(SeedRun& run, bool bounds, bool forecaster, bool gps) {
  run.load_cohort();
  if (forecaster) run.load_forecaster();
  if (bounds) run.load_bounds();
  if (gps) run.load_gps();
}

void print_rows(const std::vector<ReportRow>& rows) {
  std::cout << "policy            dX        cost      L_b       L_low     L_up\n";
  for (const auto& r : rows) {
    std::printf("%-16s  %-8.4f  %-8.4f  %-8.4f  %-8.4f  %-8.4f\n", r.name.c_str(), r.delta_x, r.cost, r.l_b_test,
                r.l_low, r.l_up);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lab-order policy learning on synthetic ICU cohorts"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "TOML run configuration (built-in defaults when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", g.out, "Output root; each seed writes under <out>/seed_<n>");
  app.add_flag("--oracle-future", g.oracle_future, "Score test-set panel changes on the true future");

  auto* generate = app.add_subcommand("generate", "Simulate the cohort");
  auto* bounds = app.add_subcommand("bounds", "Evaluate the rules and write per-stay order bounds");
  auto* train_fc = app.add_subcommand("train-forecaster", "Fit the 24h forecaster");
  auto* train_gps = app.add_subcommand("train-gps", "Fit the order density model and its reliability threshold");
  auto* train_pol = app.add_subcommand("train-policy", "Train the ordering policy");
  bool no_gps = false;
  train_pol->add_flag("--no-gps", no_gps, "Train without the density constraint");
  auto* evaluate = app.add_subcommand("evaluate", "Score every policy on the test split");
  auto* explain_cmd = app.add_subcommand("explain", "Explain one stay's recommended orders as JSON");
  std::string stay_id;
  std::string explain_out;
  explain_cmd->add_option("--stay", stay_id, "Stay id")->required();
  explain_cmd->add_flag("--no-gps", no_gps, "Explain the unconstrained policy");
  explain_cmd->add_option("--output", explain_out, "Write the JSON here instead of stdout");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage for every seed");
  auto* search = app.add_subcommand("search", "Random search over policy hyperparameters");
  std::size_t trials = 10;
  search->add_option("--trials", trials, "Number of sampled configurations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load(g);
    const fs::path out = g.out;

    if (pipeline->parsed()) {
      const auto report = run_pipeline(cfg, out);
      print_rows(report.rows);
      std::cout << "report: " << (out / "report.json").string() << "\n";
      return 0;
    }

    const auto seed = seed_of(g, cfg);
    SeedRun run(cfg, seed, out);
    if (generate->parsed()) {
      run.generate();
      std::cout << run.stays().size() << " stays -> " << run.layout().cohort().string() << "\n";
    } else if (bounds->parsed()) {
      run.load_cohort();
      run.compute_bounds();
      std::cout << "bounds -> " << run.layout().bounds().string() << "\n";
    } else if (train_fc->parsed()) {
      run.load_cohort();
      run.train_forecaster();
      std::cout << "forecaster -> " << run.layout().forecaster().string() << "\n";
    } else if (train_gps->parsed()) {
      load_inputs(run, true, true, false);
      run.train_gps();
      std::cout << "gps -> " << run.layout().gps().string() << "\n";
    } else if (train_pol->parsed()) {
      load_inputs(run, true, true, !no_gps);
      run.train_policy(!no_gps);
      std::cout << "policy -> " << run.layout().policy(!no_gps).string() << "\n";
    } else if (evaluate->parsed()) {
      load_inputs(run, true, true, true);
      run.load_policy(false);
      run.load_policy(true);
      const auto rows = run.evaluate();
      write_seed_report(run, rows);
      run.write_plots();
      print_rows(rows);
    } else if (explain_cmd->parsed()) {
      load_inputs(run, false, true, false);
      run.load_policy(!no_gps);
      const auto idx = run.find_stay(stay_id);
      if (!idx) throw DataError("explain: no stay '" + stay_id + "' in the cohort");
      const auto e = explain(run.policy(!no_gps), run.stays()[*idx], run.forecaster(), run.rules(), run.stats(),
                             run.catalog(), cfg.eval.no_future);
      const auto text = e.to_json().dump(2) + "\n";
      if (explain_out.empty())
        std::cout << text;
      else
        write_text(explain_out, text);
    } else if (search->parsed()) {
      load_inputs(run, true, true, true);
      const auto result = run.search(trials, derive_seed(seed, {0x5EA4}));
      const auto path = run.layout().logs() / "search.json";
      write_text(path, result.dump(2) + "\n");
      std::cout << "best trial " << result["best"] << " -> " << path.string() << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  }
}
