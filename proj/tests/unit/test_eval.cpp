#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/golden_rules.hpp"
#include "labpolicy/error.hpp"
#include "labpolicy/eval/config.hpp"
#include "labpolicy/eval/explain.hpp"
#include "labpolicy/eval/pipeline.hpp"
#include "labpolicy/eval/report.hpp"
#include "labpolicy/numeric/rng.hpp"

using namespace labpolicy;
using namespace labpolicy::eval;
using numeric::Matrix;
using numeric::Rng;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

policy::PolicyData bounded_data(std::size_t n, std::size_t k, Rng& rng) {
  policy::PolicyData d;
  d.contexts = Matrix(n, 2);
  d.d = Matrix(n, k);
  d.t_min = Matrix(n, k);
  d.t_max = Matrix(n, k);
  d.t_star = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      d.d(i, j) = numeric::uniform01(rng) * 2;
      const double lo = numeric::bernoulli(rng, 0.25) ? 1 : 0;
      const double star = lo > 0 ? (numeric::bernoulli(rng, 0.9) ? 1 : 0) : (numeric::bernoulli(rng, 0.6) ? 1 : 0);
      d.t_min(i, j) = lo;
      d.t_star(i, j) = star;
      d.t_max(i, j) = std::max(lo, star);
    }
  return d;
}

EvalInputs inputs_for(const policy::PolicyData& d) {
  EvalInputs in;
  in.test = &d;
  in.alpha = outcome::OutcomeConfig::uniform_costs(d.k());
  return in;
}

// Zero network whose last bias orders exactly `tests`.
policy::PolicyModel fixed_policy(std::size_t cdim, std::size_t k, const std::vector<std::size_t>& tests) {
  auto m = policy::PolicyModel::init(cdim, k, std::vector<std::size_t>{4}, 1);
  for (auto& e : m.params.entries()) std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
  auto& b = m.params.at("policy.b1");
  std::fill(b.data.begin(), b.data.end(), -10.0);
  for (auto j : tests) b.data[j] = 10.0;
  return m;
}

core::FeatureStats unit_stats(std::size_t d) {
  core::FeatureStats s;
  s.mean.assign(d, 0.0);
  s.sd.assign(d, 1.0);
  return s;
}

}  // namespace

TEST_CASE("config: every section parses and unknown or mistyped keys are rejected") {
  const auto c = parse_config(R"(
[cohort]
n_stays = 300
q = 0.5
[rules]
enabled = false
[forecaster]
kind = "carry_forward"
lr_grid = [1e-3, 1e-4]
[gps]
context_hidden = [8, 8]
quantile = 0.1
[policy]
hidden = [16]
eps_override = 0.25
[outcome]
beta1 = 3
cost_mode = "real"
[eval]
seeds = [4, 5]
oracle_future = true
)");
  CHECK(c.cohort.n_stays == 300);
  CHECK(c.cohort.q == 0.5);
  CHECK_FALSE(c.rules.enabled);
  CHECK(c.forecaster.kind == forecast::ForecastKind::carry_forward);
  CHECK(c.forecaster.lr_grid == std::vector<double>{1e-3, 1e-4});
  CHECK(c.gps.context_hidden == std::vector<std::size_t>{8, 8});
  CHECK(c.gps.quantile == 0.1);
  CHECK(c.policy.hidden == std::vector<std::size_t>{16});
  CHECK(c.policy.eps_override == 0.25);
  CHECK(c.policy.beta1 == 3.0);
  CHECK(c.outcome.cost_mode == CostMode::real);
  CHECK(c.eval.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.eval.oracle_future);

  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[cohort]\nn_stay = 3\n").find("n_stay") != std::string::npos);
  CHECK(message("[policy]\nlr = \"fast\"\n").find("policy.lr") != std::string::npos);
  CHECK(message("[cohort]\nn_stays = -4\n").find("cohort.n_stays") != std::string::npos);
  CHECK(message("[plots]\nx = 1\n").find("plots") != std::string::npos);
  CHECK(message("[eval]\ntrain_ratio = 0.9\n").find("sum to 1") != std::string::npos);
  CHECK(message("[outcome]\ncost_mode = \"free\"\n").find("cost_mode") != std::string::npos);
  CHECK(message("[cohort\n").find("line") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/run.toml"), ConfigError);
}

TEST_CASE("config: shipped files load and echo back") {
  const fs::path dir = fs::path(LABPOLICY_SOURCE_DIR) / "configs";
  const auto def = load_config(dir / "default.toml");
  CHECK(def.eval.seeds.size() == 3);
  CHECK(def.eval.beta1 == 1.0);
  CHECK(def.eval.beta2 == 1.0);
  const auto j = def.to_json();
  for (const char* s : {"cohort", "rules", "forecaster", "gps", "policy", "outcome", "eval"}) CHECK(j.contains(s));
  // The CLI runs without --config on the built-in defaults; they must agree.
  CHECK(def.to_json() == RunConfig{}.to_json());
  const auto quick = load_config(dir / "quick.toml");
  CHECK(quick.cohort.n_stays == 600);

  const auto a = def.for_seed(2), b = def.for_seed(2), c = def.for_seed(3);
  CHECK(a.cohort.seed == 2);
  CHECK(a.policy.seed == b.policy.seed);
  CHECK(a.gps.seed != c.gps.seed);
}

TEST_CASE("report: bound columns add up and CSV matches JSON value for value") {
  Rng rng(3);
  auto d = bounded_data(200, 4, rng);
  auto in = inputs_for(d);
  Report r;
  r.seeds = {1, 2};
  for (std::uint64_t seed : {1, 2}) {
    r.rows.push_back(evaluate_actions("LowerBound", seed, d.t_min, in));
    r.rows.push_back(evaluate_actions("Physician", seed, d.t_star, in));
    r.rows.push_back(
        evaluate_actions("Random0.5", seed, policy::baseline_orders(policy::BaselineKind::random, d, 0.5, seed), in));
  }
  r.aggregate_rows();
  for (const auto& row : r.rows) CHECK(std::abs(row.l_b_test - (row.l_low + row.l_up)) <= 1e-9);
  REQUIRE(r.aggregate.size() == 3);
  CHECK(r.aggregate[0].name == "LowerBound");
  CHECK(r.aggregate[2].n == 2);
  CHECK(r.aggregate[0].cost.std == 0.0);
  const double m = (r.rows[2].cost + r.rows[5].cost) / 2;
  CHECK(r.aggregate[2].cost.mean == doctest::Approx(m));

  const auto j = r.to_json();
  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "name,seed,stat,delta_x,cost,l_b_test,l_low,l_up,utility,mean_gps,frac_below_threshold");
  const char* cols[] = {"delta_x", "cost", "l_b_test", "l_low", "l_up", "utility"};
  for (const auto& row : j["rows"]) {
    REQUIRE(std::getline(csv, line));
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    CHECK(f[0] == row["name"].get<std::string>());
    for (int c = 0; c < 6; ++c) CHECK(std::stod(f[3 + c]) == row[cols[c]].get<double>());
  }
  for (const auto& agg : j["aggregate"]) {
    for (const char* stat : {"mean", "std"}) {
      REQUIRE(std::getline(csv, line));
      std::vector<std::string> f;
      std::stringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
      CHECK(f[2] == stat);
      for (int c = 0; c < 6; ++c) CHECK(std::stod(f[3 + c]) == agg[cols[c]][stat].get<double>());
    }
  }
  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("evaluate: bound policies have no bound loss and the physician never exceeds the upper bound") {
  Rng rng(4);
  auto d = bounded_data(1000, 10, rng);
  auto in = inputs_for(d);
  const auto lo = evaluate_actions("LowerBound", 1, policy::baseline_orders(policy::BaselineKind::lower, d), in);
  const auto up = evaluate_actions("UpperBound", 1, policy::baseline_orders(policy::BaselineKind::upper, d), in);
  const auto ph = evaluate_actions("Physician", 1, policy::baseline_orders(policy::BaselineKind::physician, d), in);
  CHECK(lo.l_b_test == 0.0);
  CHECK(up.l_b_test == 0.0);
  CHECK(ph.l_up == 0.0);
  const auto r5 = evaluate_actions("Random0.5", 1, policy::baseline_orders(policy::BaselineKind::random, d, 0.5, 1), in);
  const auto r75 =
      evaluate_actions("Random0.75", 1, policy::baseline_orders(policy::BaselineKind::random, d, 0.75, 2), in);
  CHECK(r75.cost > r5.cost);

  // Any policy sits inside the all-zeros / all-ones envelope.
  const auto zeros = evaluate_actions("none", 1, Matrix(1000, 10, 0.0), in);
  const auto ones = evaluate_actions("all", 1, Matrix(1000, 10, 1.0), in);
  for (const auto& row : {lo, up, ph, r5, r75}) {
    CHECK(row.l_low <= zeros.l_low);
    CHECK(row.l_up <= ones.l_up);
  }
  CHECK(ones.cost == doctest::Approx(1.0));

  // Same inputs, same row.
  const auto again = evaluate_actions("Physician", 1, d.t_star, in);
  CHECK(again.delta_x == ph.delta_x);
  CHECK(again.utility == ph.utility);

  policy::PolicyData short_bounds = d;
  short_bounds.t_min = Matrix(3, 10);
  in.test = &short_bounds;
  CHECK_THROWS_AS(evaluate_actions("x", 1, d.t_star, in), DataError);
}

TEST_CASE("explain: a low hemoglobin stay cites the rule behind the CBC order") {
  const auto& cat = core::FeatureCatalog::icu_default();
  const auto stay = golden::make_stay(
      "S-hgb", {{-30, "Hemoglobin", 9.0}, {-2, "Hemoglobin", 6.5}, {-10, "Temperature", 37.2}}, cat);
  const auto stats = unit_stats(cat.d());
  const auto fc = forecast::ForecastModel::carry_forward(cat.d());
  const std::size_t cdim = 72 * cat.d();
  const auto cbc = *cat.test_index("CBC");
  const auto pol = fixed_policy(cdim, cat.k(), {cbc});

  const auto e = explain(pol, stay, fc, rules::default_ruleset(), stats, cat);
  CHECK(e.stay_id == "S-hgb");
  CHECK(e.order[cbc] == 1);
  bool hgb_low = false;
  for (const auto& r : e.fired_rules)
    if (r.name == "hgb-low") {
      hgb_low = true;
      REQUIRE(r.clauses.size() == 1);
      CHECK(r.clauses[0].satisfied);
      CHECK(*r.clauses[0].value == 6.5);
    }
  CHECK(hgb_low);
  REQUIRE(e.ordered.size() == 1);
  const auto& t = e.ordered[0];
  CHECK(t.test == "CBC");
  CHECK(std::find(t.cited_rules.begin(), t.cited_rules.end(), "hgb-low") != t.cited_rules.end());
  const FeatureExplanation* hgb = nullptr;
  for (const auto& f : t.features)
    if (f.feature == "Hemoglobin") hgb = &f;
  REQUIRE(hgb != nullptr);
  CHECK(hgb->prev.mean == doctest::Approx(7.75));
  CHECK(hgb->prev.min == 6.5);
  CHECK(hgb->prev.max == 9.0);
  CHECK(hgb->predicted.mean == doctest::Approx(6.5));
  CHECK(hgb->predicted_series.size() == 24);

  // Every recommended test with a fired rule cites it.
  for (const auto& te : e.ordered)
    for (const auto& r : e.fired_rules)
      if (std::find(r.tests.begin(), r.tests.end(), te.test) != r.tests.end())
        CHECK(std::find(te.cited_rules.begin(), te.cited_rules.end(), r.name) != te.cited_rules.end());

  CHECK(explain(pol, stay, fc, rules::default_ruleset(), stats, cat).to_json().dump() == e.to_json().dump());

  const auto quiet = explain(fixed_policy(cdim, cat.k(), {}), stay, fc, rules::default_ruleset(), stats, cat);
  CHECK(quiet.ordered.empty());
  CHECK_FALSE(quiet.fired_rules.empty());
}

TEST_CASE("forecast-aware bounds see the predicted hours") {
  const auto& cat = core::FeatureCatalog::icu_default();
  const auto stay = golden::make_stay("S-f", {{-3, "Hemoglobin", 9.0}}, cat);
  const auto stats = unit_stats(cat.d());
  const auto raw = core::RawWindow::from_stay(stay, cat.d());
  Matrix forecast(24, cat.d(), 0.0);
  const auto hgb = *cat.feature_id("Hemoglobin");
  for (std::size_t h = 0; h < 24; ++h) forecast(h, hgb) = 6.0;
  const auto w = window_with_forecast(raw, forecast, stats, cat);
  CHECK(w.anchor == raw.anchor + 24);
  CHECK(w.by_feature[hgb].size() == 25);
  CHECK(w.by_feature[*cat.feature_id("Propofol")].empty());
  const auto b = rules::compute_bounds(w, rules::default_ruleset(), stay.observed_order);
  CHECK(b.t_min[*cat.test_index("CBC")] == 1);
  const auto plain = rules::compute_bounds(raw, rules::default_ruleset(), stay.observed_order);
  CHECK(plain.t_min[*cat.test_index("CBC")] == 0);
}

TEST_CASE("pipeline: quick run emits every row in table order and reruns byte-identically") {
  const fs::path out = fs::temp_directory_path() / "labpolicy_test_pipeline";
  fs::remove_all(out);
  auto cfg = load_config(fs::path(LABPOLICY_SOURCE_DIR) / "configs" / "quick.toml");
  const auto report = run_pipeline(cfg, out);
  const std::vector<std::string> names = {"Random0.5",  "Random0.75",    "LowerBound", "UpperBound",
                                          "Physician", "Ours(w/o GPS)", "Ours(w GPS)"};
  REQUIRE(report.rows.size() == names.size());
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(report.rows[i].name == names[i]);
  CHECK(report.rows[2].l_b_test == 0.0);
  CHECK(report.rows[4].l_up == 0.0);
  CHECK(report.rows[6].mean_gps.has_value());

  const SeedLayout layout(out, 1);
  for (const auto& p : {layout.cohort(), layout.bounds(), layout.forecaster(), layout.gps(), layout.policy(true),
                        layout.policy(false), layout.report_json(), layout.report_csv(), out / "report.json",
                        out / "report.csv", layout.logs() / "policy_gps.csv"})
    CHECK_MESSAGE(fs::exists(p), p.string());
  CHECK_FALSE(fs::exists(layout.failed()));
  std::size_t plots = 0;
  for (const auto& e : fs::directory_iterator(layout.plots())) plots += e.path().extension() == ".csv";
  CHECK(plots == 10);

  const auto first = slurp(out / "report.json");
  run_pipeline(cfg, out);
  CHECK(slurp(out / "report.json") == first);

  // Stage-by-stage reloads reproduce the in-memory evaluation.
  SeedRun again(cfg, 1, out);
  again.load_cohort();
  again.load_bounds();
  again.load_forecaster();
  again.load_gps();
  again.load_policy(false);
  again.load_policy(true);
  const auto rows = again.evaluate();
  REQUIRE(rows.size() == report.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].delta_x == report.rows[i].delta_x);
    CHECK(rows[i].l_low == report.rows[i].l_low);
  }
  const auto idx = again.find_stay(again.stays()[again.split().test[0]].stay_id);
  REQUIRE(idx.has_value());
  fs::remove_all(out);
}

TEST_CASE("pipeline: a failing stage leaves a marker naming it") {
  const fs::path out = fs::temp_directory_path() / "labpolicy_test_failed";
  fs::remove_all(out);
  auto cfg = load_config(fs::path(LABPOLICY_SOURCE_DIR) / "configs" / "quick.toml");
  cfg.rules.path = out / "missing.rules";
  CHECK_THROWS_AS(run_pipeline(cfg, out), ConfigError);
  const auto marker = slurp(SeedLayout(out, 1).failed());
  CHECK(marker.find("stage: config") != std::string::npos);

  cfg.rules.path.reset();
  SeedRun run(cfg, 1, out);
  CHECK_THROWS_AS(run.load_cohort(), DataError);
  fs::remove_all(out);
}
