// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria (0 when all pass).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../support/golden_rules.hpp"
#include "labpolicy/error.hpp"
#include "labpolicy/eval/config.hpp"
#include "labpolicy/eval/pipeline.hpp"
#include "labpolicy/forecast/forecaster.hpp"
#include "labpolicy/gps/flow.hpp"
#include "labpolicy/numeric/gradcheck.hpp"
#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/numeric/rng.hpp"
#include "labpolicy/outcome/outcome.hpp"
#include "labpolicy/policy/policy.hpp"
#include "labpolicy/rules/rules.hpp"
#include "labpolicy/synth/generator.hpp"

using namespace labpolicy;
using numeric::Matrix;
using numeric::Rng;
using numeric::Var;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = numeric::normal(rng, 0.0, sd);
  return m;
}

void perturb(numeric::ParamSet& p, Rng& rng, double sd) {
  for (auto& e : p.entries())
    for (auto& v : e.value.data) v += numeric::normal(rng, 0.0, sd);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1 ----
Outcome rule_golden_suite() {
  const auto t0 = Clock::now();
  const auto& cat = core::FeatureCatalog::icu_default();
  const auto& rs = rules::default_ruleset();
  const auto cases = golden::rule_cases();
  std::size_t ok = 0;
  std::vector<std::string> bad;
  std::vector<std::string> covered;
  for (const auto& c : cases) {
    auto it = std::find_if(rs.rules.begin(), rs.rules.end(), [&](const rules::Rule& r) { return r.name == c.rule; });
    if (it == rs.rules.end()) {
      bad.push_back(c.rule + " (not in ruleset)");
      continue;
    }
    covered.push_back(c.rule);
    std::vector<std::size_t> want, got = it->tests;
    for (const auto& t : c.tests) want.push_back(cat.test_index(t).value());
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    const auto pos = core::RawWindow::from_stay(golden::make_stay("pos", c.positive, cat), cat.d());
    const auto neg = core::RawWindow::from_stay(golden::make_stay("neg", c.negative, cat), cat.d());
    if (want == got && rules::eval_rule(*it, pos).fired && !rules::eval_rule(*it, neg).fired)
      ++ok;
    else
      bad.push_back(c.rule);
  }
  std::size_t uncovered = 0;
  for (const auto& r : rs.rules)
    if (std::find(covered.begin(), covered.end(), r.name) == covered.end()) ++uncovered;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = bad.empty() && uncovered == 0 && secs < 5.0;
  o.detail = std::to_string(ok) + "/" + std::to_string(cases.size()) + " rules pass, " +
             std::to_string(uncovered) + " rules without cases, " + fmt("%.2fs", secs);
  for (const auto& b : bad) o.detail += "; failed " + b;
  return o;
}

// ---- 2 ----
Outcome bound_invariants() {
  const auto t0 = Clock::now();
  const auto& cat = core::FeatureCatalog::icu_default();
  const auto& rs = rules::default_ruleset();
  synth::GenConfig g;
  g.n_stays = 5000;
  g.seed = 2;
  const auto stays = synth::generate(g, cat, rs);
  std::size_t violations = 0;
  for (const auto& s : stays) {
    const auto b = rules::compute_bounds(core::RawWindow::from_stay(s, cat.d()), rs, s.observed_order);
    for (std::size_t j = 0; j < cat.k(); ++j) {
      if (b.t_min[j] > b.t_max[j]) ++violations;
      if (b.t_max[j] != (b.t_min[j] | s.observed_order[j])) ++violations;
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 30.0 && stays.size() == 5000,
          std::to_string(stays.size()) + " stays, " + std::to_string(violations) + " violations, " +
              fmt("%.2fs", secs)};
}

// ---- 5 ----
Outcome gradient_checks() {
  double worst = 0.0;
  std::size_t runs = 0, thin = 0;
  auto record = [&](const numeric::GradCheckResult& r, std::size_t min_probes) {
    worst = std::max(worst, r.max_rel_error);
    ++runs;
    if (r.probes < min_probes) ++thin;
  };

  // forecaster
  forecast::ForecastConfig fc;
  fc.patch_len = 8;
  fc.embed_dim = 3;
  fc.hidden = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = forecast::ForecastModel::init_patch_mlp(2, fc, seed);
    Rng rng(100 + seed);
    perturb(m.params, rng, 0.4);
    std::vector<Matrix> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_matrix(48, 2, rng));
    const Matrix target = random_matrix(3, 48, rng);
    std::vector<const Matrix*> ptrs;
    for (const auto& x : xs) ptrs.push_back(&x);
    numeric::LossBuilder loss = [&](numeric::Tape& tape, const numeric::BoundParams& bp) -> Var {
      Var pred = forecast::forecast_forward(tape, bp, m, ptrs);
      return numeric::ops::mean(numeric::ops::square(numeric::ops::sub(pred, tape.constant(target))));
    };
    record(numeric::finite_diff_check(loss, m.params, 1e-5, seed, 64), 10);
  }

  // conditional flow
  gps::GpsConfig gc;
  gc.layers = 2;
  gc.bins = 4;
  gc.context_hidden = {4, 3};
  gc.made_hidden = 6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = gps::GpsModel::init(3, 5, gc, seed);
    Rng rng(50 + seed);
    perturb(m.params, rng, 0.3);
    const Matrix ctx = random_matrix(6, 5, rng);
    Matrix t = random_matrix(6, 3, rng, 0.5);
    for (auto& v : t.data) v += 0.5;
    numeric::LossBuilder nll = [&](numeric::Tape& tape, const numeric::BoundParams& bp) -> Var {
      Var emb = gps::embed_var(bp, m, tape.constant(ctx));
      return numeric::ops::neg(numeric::ops::mean(gps::log_density_var(bp, m, tape.constant(t), emb)));
    };
    record(numeric::finite_diff_check(nll, m.params, 1e-5, seed, 64), 10);
  }

  // policy, with and without the density term
  const std::size_t d = 4, k = 3, cdim = 72 * d, n = 6;
  Rng rng(11);
  policy::PolicyData data;
  data.contexts = random_matrix(n, cdim, rng);
  data.d = Matrix(n, k);
  data.t_min = Matrix(n, k);
  Matrix eq(n, k);
  for (std::size_t i = 0; i < n * k; ++i) {
    data.d.data[i] = std::abs(numeric::normal(rng));
    data.t_min.data[i] = numeric::bernoulli(rng, 0.3) ? 1.0 : 0.0;
    eq.data[i] = data.t_min.data[i] > 0 || numeric::bernoulli(rng, 0.5) ? 1.0 : 0.0;
  }
  gps::GpsConfig tiny;
  tiny.context_hidden = {6, 6};
  tiny.made_hidden = 8;
  auto g = gps::GpsModel::init(k, cdim, tiny, 2);
  perturb(g.params, rng, 0.05);
  const Matrix emb = g.embed(data.contexts);
  outcome::OutcomeConfig oc;
  oc.beta1 = 2.0;
  oc.beta2 = 3.0;
  oc.alpha = outcome::OutcomeConfig::uniform_costs(k);
  oc.mode = outcome::Mode::smooth;
  const std::vector<double> lam = {0.5, 1.0, 0.0, 2.0, 0.1, 0.7};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = policy::PolicyModel::init(cdim, k, std::vector<std::size_t>{5}, seed);
    for (bool with_gps : {false, true}) {
      numeric::LossBuilder loss = [&](numeric::Tape& tape, const numeric::BoundParams& bp) -> Var {
        Var t = policy::policy_forward(bp, m, tape.constant(data.contexts));
        auto o = outcome::smooth_utility(t, data.d, data.t_min, eq, oc);
        if (!with_gps) return policy::lagrangian(o.utility);
        numeric::BoundParams gp(tape, g.params, false);
        Var f = numeric::ops::exp(gps::log_density_var(gp, g, t, tape.constant(emb)));
        return policy::lagrangian(o.utility, f, lam, 0.05);
      };
      record(numeric::finite_diff_check(loss, m.params, 1e-6, seed, 40), 10);
    }
  }
  return {worst < 1e-4 && thin == 0,
          std::to_string(runs) + " seeded checks over forecaster, flow and policy, max rel error " +
              fmt("%.2e", worst)};
}

// ---- 6 ----
double radical_inverse(std::size_t i, std::size_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

void labelled(std::size_t n, std::size_t k, std::size_t cdim, Rng& rng, Matrix& t, Matrix& ctx) {
  ctx = random_matrix(n, cdim, rng);
  t = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) t(i, j) = (ctx(i, j % cdim) + 0.3 * numeric::normal(rng) > 0) ? 1.0 : 0.0;
}

Outcome flow_properties() {
  gps::GpsConfig cfg;
  cfg.context_hidden = {8, 8};
  cfg.made_hidden = 12;
  cfg.batch_size = 64;

  auto m = gps::GpsModel::init(5, 7, cfg, 9);
  Rng rng(10);
  perturb(m.params, rng, 0.3);
  const Matrix emb = m.embed(random_matrix(200, 7, rng));
  const Matrix z = random_matrix(200, 5, rng, 1.8);
  const auto [t, ld_fwd] = m.flow_forward(z, emb);
  const auto [z2, ld_inv] = m.flow_inverse(t, emb);
  double inv = 0, antisym = 0;
  for (std::size_t i = 0; i < z.size(); ++i) inv = std::max(inv, std::abs(z2.data[i] - z.data[i]));
  for (std::size_t r = 0; r < z.rows; ++r) antisym = std::max(antisym, std::abs(ld_fwd[r] + ld_inv[r]));

  Matrix t2, c2;
  labelled(300, 2, 3, rng, t2, c2);
  auto c2cfg = cfg;
  c2cfg.lr_grid = {5e-3};
  c2cfg.max_epochs = 10;
  const auto m2 = gps::train_gps(t2, c2, Matrix(0, 2), Matrix(0, 3), c2cfg);
  const Matrix e2 = m2.embed(random_matrix(1, 3, rng));
  const std::size_t n = 1000000;
  Matrix pts(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    pts(i, 0) = -6.0 + 12.0 * radical_inverse(i + 1, 2);
    pts(i, 1) = -6.0 + 12.0 * radical_inverse(i + 1, 3);
  }
  double mass = 0;
  for (double v : m2.log_density_embedded(pts, e2)) mass += std::exp(v);
  mass *= 144.0 / static_cast<double>(n);

  Matrix t3, c3, vt, vc;
  labelled(400, 3, 4, rng, t3, c3);
  labelled(100, 3, 4, rng, vt, vc);
  auto c3cfg = cfg;
  c3cfg.seed = 1;
  c3cfg.lr_grid = {5e-3};
  c3cfg.max_epochs = 15;
  const double before = gps::mean_nll(gps::GpsModel::init(3, 4, c3cfg, numeric::derive_seed(1, {0x6A, 0})), vt, vc);
  const double after = gps::mean_nll(gps::train_gps(t3, c3, vt, vc, c3cfg), vt, vc);

  return {inv < 1e-6 && antisym < 1e-8 && mass >= 0.95 && mass <= 1.05 && after <= before,
          "inversion " + fmt("%.1e", inv) + ", log-det sum " + fmt("%.1e", antisym) + ", K=2 mass " +
              fmt("%.4f", mass) + ", held-out NLL " + fmt("%.3f", before) + " -> " + fmt("%.3f", after)};
}

// ---- 7 ----
Outcome gda_toy() {
  numeric::ParamSet p;
  p.add("theta", Matrix(1, 1, 0.0));
  std::vector<double> lambda = {1.0};
  const std::size_t batch[] = {0};
  const double lr = 0.05, eta = 0.05, eps = 3.0;
  int reached = -1;
  for (int step = 0; step < 2000; ++step) {
    numeric::Tape tape;
    numeric::BoundParams bp(tape, p, true);
    Var theta = bp["theta"];
    Var g = numeric::ops::neg(numeric::ops::square(numeric::ops::add_scalar(theta, -2.0)));
    tape.backward(policy::lagrangian(g, theta, lambda, eps));
    const double f = theta.value()(0, 0);
    p.at("theta")(0, 0) -= lr * bp.gradients().at("theta")(0, 0);
    const double fs[] = {f};
    policy::ascend_lambda(lambda, batch, fs, eps, eta);
    if (reached < 0 && std::abs(p.at("theta")(0, 0) - 3.0) < 0.05) reached = step + 1;
  }
  const double theta = p.at("theta")(0, 0);
  return {std::abs(theta - 3.0) < 0.05,
          "theta " + fmt("%.4f", theta) + ", lambda " + fmt("%.3f", lambda[0]) + ", within 0.05 from step " +
              std::to_string(reached)};
}

// ---- 8 ----
Outcome discrete_identity() {
  Rng rng(77);
  const std::size_t k = 10;
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    rules::OrderBounds b;
    b.t_min.resize(k);
    b.t_max.resize(k);
    std::vector<double> t(k), d(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      b.t_min[j] = numeric::bernoulli(rng, 0.3);
      b.t_max[j] = b.t_min[j] ? 1 : numeric::bernoulli(rng, 0.6);
      t[j] = numeric::bernoulli(rng, 0.5) ? 1.0 : 0.0;
    }
    const auto m = outcome::test_metrics(t, b, d, outcome::OutcomeConfig::uniform_costs(k));
    if (outcome::bound_loss(t, b, outcome::Mode::hard) != m.l_low + m.l_up) ++mismatches;
  }
  return {mismatches == 0, "1000 random orders, " + std::to_string(mismatches) + " mismatches"};
}

// ---- shared benchmark runs for 3, 4, 9, 10 ----
struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  synth::CalibrationStats calib;
  double fc_mse = 0, cf_mse = 0, fc_seconds = 0, total_seconds = 0;
  const eval::ReportRow* physician = nullptr;
  const eval::ReportRow* plain = nullptr;
  const eval::ReportRow* gps = nullptr;
  std::vector<eval::ReportRow> rows;
};

double timing_of(const fs::path& timing, const std::string& stage, double* total) {
  const auto j = nlohmann::json::parse(slurp(timing));
  double s = 0;
  *total = 0;
  for (const auto& e : j) {
    *total += e["seconds"].get<double>();
    if (e["stage"] == stage) s = e["seconds"].get<double>();
  }
  return s;
}

SeedResult benchmark_seed(const eval::RunConfig& cfg, std::uint64_t seed, const fs::path& out, bool reuse) {
  SeedResult r;
  r.seed = seed;
  try {
    const eval::SeedLayout layout(out, seed);
    if (reuse && fs::exists(layout.report_json()) && !fs::exists(layout.failed())) {
      std::cout << "  seed " << seed << ": reusing " << layout.dir.string() << std::endl;
      const auto j = nlohmann::json::parse(slurp(layout.report_json()));
      for (const auto& row : j["rows"]) {
        eval::ReportRow x;
        x.name = row["name"];
        x.seed = seed;
        x.delta_x = row["delta_x"];
        x.cost = row["cost"];
        x.l_b_test = row["l_b_test"];
        x.l_low = row["l_low"];
        x.l_up = row["l_up"];
        if (row.contains("mean_gps") && !row["mean_gps"].is_null()) x.mean_gps = row["mean_gps"].get<double>();
        if (row.contains("frac_below_threshold") && !row["frac_below_threshold"].is_null())
          x.frac_below = row["frac_below_threshold"].get<double>();
        r.rows.push_back(x);
      }
    } else {
      std::cout << "  seed " << seed << ": running pipeline" << std::endl;
      r.rows = eval::run_seed(cfg, seed, out);
    }
    for (const auto& row : r.rows) {
      if (row.name == "Physician") r.physician = &row;
      if (row.name == "Ours(w/o GPS)") r.plain = &row;
      if (row.name == "Ours(w GPS)") r.gps = &row;
    }
    if (!r.physician || !r.plain || !r.gps) throw DataError("report is missing policy rows");

    eval::SeedRun run(cfg, seed, out);
    run.load_cohort();
    run.load_bounds();
    run.load_forecaster();
    r.calib = synth::calibration_report(run.stays(), run.bounds());
    std::vector<core::StayWindow> windows;
    for (auto i : run.split().test) windows.push_back(core::make_window(run.stays()[i], run.stats()));
    std::vector<const core::StayWindow*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const auto samples = forecast::forecast_samples(ptrs);
    const bool masked = cfg.forecaster.masked_loss;
    r.fc_mse = forecast::dataset_mse(run.forecaster(), samples, masked);
    r.cf_mse = forecast::dataset_mse(forecast::ForecastModel::carry_forward(run.catalog().d()), samples, masked);
    r.fc_seconds = timing_of(layout.logs() / "timing.json", "forecaster", &r.total_seconds);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

std::string seed_tag(const SeedResult& r) { return "seed " + std::to_string(r.seed); }

Outcome calibration(const std::vector<SeedResult>& rs) {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : rs) {
    if (!r.ok) {
      detail += seed_tag(r) + " error; ";
      continue;
    }
    const bool p = r.calib.guideline_to_observed_ratio >= 0.2 && r.calib.guideline_to_observed_ratio <= 0.4 &&
                   r.calib.miss_rate >= 0.05 && r.calib.miss_rate <= 0.15;
    good += p;
    detail += seed_tag(r) + " ratio " + fmt("%.3f", r.calib.guideline_to_observed_ratio) + " miss " +
              fmt("%.3f", r.calib.miss_rate) + "; ";
  }
  return {good == rs.size() && rs.size() == 3, std::to_string(good) + "/3 seeds in range: " + detail};
}

Outcome forecaster_quality(const std::vector<SeedResult>& rs) {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : rs) {
    if (!r.ok) {
      detail += seed_tag(r) + " error; ";
      continue;
    }
    const double ratio = r.fc_mse / r.cf_mse;
    good += ratio <= 0.95 && r.fc_seconds < 180.0;
    detail += seed_tag(r) + " ratio " + fmt("%.3f", ratio) + " in " + fmt("%.0fs", r.fc_seconds) + "; ";
  }
  return {good >= 2, std::to_string(good) + "/3 seeds: " + detail};
}

Outcome headline(const std::vector<SeedResult>& rs) {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : rs) {
    if (!r.ok) {
      detail += seed_tag(r) + " error: " + r.error + "; ";
      continue;
    }
    const auto& o = *r.gps;
    const auto& p = *r.physician;
    const bool a = o.cost < p.cost, b = o.l_low < p.l_low, c = o.delta_x >= 0.9 * p.delta_x;
    const bool fast = r.total_seconds < 900.0;
    good += a && b && c && fast;
    detail += seed_tag(r) + " cost " + fmt("%.3f", o.cost) + " vs " + fmt("%.3f", p.cost) + ", L_low " +
              fmt("%.3f", o.l_low) + " vs " + fmt("%.3f", p.l_low) + ", dX " + fmt("%.3f", o.delta_x) + " vs " +
              fmt("%.3f", p.delta_x) + ", " + fmt("%.0fs", r.total_seconds) + "; ";
  }
  return {good >= 2, std::to_string(good) + "/3 seeds: " + detail};
}

Outcome gps_effect(const std::vector<SeedResult>& rs) {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : rs) {
    if (!r.ok) {
      detail += seed_tag(r) + " error; ";
      continue;
    }
    if (!r.gps->mean_gps || !r.plain->mean_gps) {
      detail += seed_tag(r) + " no density columns; ";
      continue;
    }
    const bool p = *r.gps->mean_gps >= *r.plain->mean_gps && *r.gps->frac_below <= *r.plain->frac_below;
    good += p;
    detail += seed_tag(r) + " mean f " + fmt("%.4g", *r.gps->mean_gps) + " vs " + fmt("%.4g", *r.plain->mean_gps) +
              ", below " + fmt("%.3f", *r.gps->frac_below) + " vs " + fmt("%.3f", *r.plain->frac_below) + "; ";
  }
  return {good >= 2, std::to_string(good) + "/3 seeds: " + detail};
}

// ---- 11 ----
Outcome determinism(const eval::RunConfig& cfg, const fs::path& out) {
  fs::remove_all(out);
  eval::run_pipeline(cfg, out);
  const auto first = slurp(out / "report.json");
  const auto first_csv = slurp(out / "report.csv");
  eval::run_pipeline(cfg, out);
  const bool same = !first.empty() && first == slurp(out / "report.json") && first_csv == slurp(out / "report.csv");
  return {same, std::string(same ? "identical" : "different") + " report after rerun (" +
                    std::to_string(first.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string config = std::string(LABPOLICY_SOURCE_DIR) + "/configs/default.toml";
  std::string quick = std::string(LABPOLICY_SOURCE_DIR) + "/configs/quick.toml";
  std::string out = "acceptance_runs";
  bool reuse = false;
  app.add_option("--config", config, "Benchmark configuration");
  app.add_option("--quick-config", quick, "Reduced configuration for the determinism rerun");
  app.add_option("--out", out, "Working directory for benchmark artifacts");
  app.add_flag("--reuse", reuse, "Reuse finished seed runs under --out");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    results.emplace_back(id, o);
  };

  run(1, rule_golden_suite);
  run(2, bound_invariants);

  std::vector<SeedResult> seeds;
  std::string bench_error;
  try {
    const auto cfg = eval::load_config(config);
    for (auto s : cfg.eval.seeds) seeds.push_back(benchmark_seed(cfg, s, fs::path(out) / "benchmark", reuse));
  } catch (const std::exception& e) {
    bench_error = e.what();
  }
  auto bench = [&](Outcome (*f)(const std::vector<SeedResult>&)) {
    return [&, f] { return bench_error.empty() ? f(seeds) : Outcome{false, "error: " + bench_error}; };
  };

  run(3, bench(calibration));
  run(4, bench(forecaster_quality));
  run(5, gradient_checks);
  run(6, flow_properties);
  run(7, gda_toy);
  run(8, discrete_identity);
  run(9, bench(headline));
  run(10, bench(gps_effect));
  run(11, [&] { return determinism(eval::load_config(quick), fs::path(out) / "determinism"); });

  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& [id, o] : results) {
    std::cout << "  " << id << " " << (o.pass ? "PASS" : "FAIL") << "\n";
    failed += !o.pass;
  }
  std::cout << (results.size() - static_cast<std::size_t>(failed)) << "/" << results.size() << " criteria pass"
            << std::endl;
  return failed;
}
