#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "labpolicy/error.hpp"
#include "labpolicy/eval/pipeline.hpp"
#include "labpolicy/numeric/gradcheck.hpp"
#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/numeric/rng.hpp"
#include "labpolicy/policy/policy.hpp"

using namespace labpolicy;
using namespace labpolicy::policy;
using numeric::Rng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = numeric::normal(rng, 0.0, sd);
  return m;
}

// Random bounds with t_min ≤ t* ≤ t_max = t_min ∨ t*.
PolicyData make_data(std::size_t n, std::size_t cdim, std::size_t k, Rng& rng) {
  PolicyData d;
  d.contexts = random_matrix(n, cdim, rng);
  d.d = Matrix(n, k);
  d.t_min = Matrix(n, k);
  d.t_max = Matrix(n, k);
  d.t_star = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      d.d(i, j) = std::abs(numeric::normal(rng));
      const double lo = numeric::bernoulli(rng, 0.3) ? 1.0 : 0.0;
      const double star = lo > 0 ? (numeric::bernoulli(rng, 0.9) ? 1.0 : 0.0) : (numeric::bernoulli(rng, 0.5) ? 1.0 : 0.0);
      d.t_min(i, j) = lo;
      d.t_star(i, j) = star;
      d.t_max(i, j) = std::max(lo, star);
    }
  return d;
}

outcome::OutcomeConfig outcome_for(std::size_t k, double b1, double b2, outcome::Mode mode) {
  outcome::OutcomeConfig o;
  o.beta1 = b1;
  o.beta2 = b2;
  o.alpha = outcome::OutcomeConfig::uniform_costs(k);
  o.mode = mode;
  return o;
}

gps::GpsConfig tiny_gps() {
  gps::GpsConfig c;
  c.context_hidden = {6, 6};
  c.made_hidden = 8;
  return c;
}

bool same_params(const numeric::ParamSet& a, const numeric::ParamSet& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (const auto& e : a.entries())
    if (!b.contains(e.name) || b.at(e.name).data != e.value.data) return false;
  return true;
}

}  // namespace

TEST_CASE("GDA on a 1-D constrained toy reaches the constrained optimum") {
  // max −(θ−2)² subject to θ ≥ 3: unconstrained optimum 2, constrained 3.
  numeric::ParamSet p;
  p.add("theta", Matrix(1, 1, 0.0));
  std::vector<double> lambda = {1.0};
  const std::size_t batch[] = {0};
  const double lr = 0.05, eta = 0.05, eps = 3.0;
  for (int step = 0; step < 2000; ++step) {
    numeric::Tape tape;
    numeric::BoundParams bp(tape, p, true);
    Var theta = bp["theta"];
    Var g = numeric::ops::neg(numeric::ops::square(numeric::ops::add_scalar(theta, -2.0)));
    Var loss = lagrangian(g, theta, lambda, eps);
    tape.backward(loss);
    const double f = theta.value()(0, 0);
    p.at("theta")(0, 0) -= lr * bp.gradients().at("theta")(0, 0);
    const double fs[] = {f};
    ascend_lambda(lambda, batch, fs, eps, eta);
    REQUIRE(lambda[0] >= 0.0);
  }
  CHECK(std::abs(p.at("theta")(0, 0) - 3.0) < 0.05);
  CHECK(lambda[0] == doctest::Approx(2.0).epsilon(0.05));

  // Without the constraint the same loop settles at 2.
  numeric::ParamSet q;
  q.add("theta", Matrix(1, 1, 0.0));
  for (int step = 0; step < 2000; ++step) {
    numeric::Tape tape;
    numeric::BoundParams bp(tape, q, true);
    Var theta = bp["theta"];
    Var loss = lagrangian(numeric::ops::neg(numeric::ops::square(numeric::ops::add_scalar(theta, -2.0))));
    tape.backward(loss);
    q.at("theta")(0, 0) -= lr * bp.gradients().at("theta")(0, 0);
  }
  CHECK(std::abs(q.at("theta")(0, 0) - 2.0) < 1e-6);
}

TEST_CASE("multipliers fall when the density clears the threshold and never go negative") {
  std::vector<double> lambda = {1.0, 1.0, 0.001};
  const std::size_t batch[] = {0, 1, 2};
  const double f[] = {5.0, 1.0, 10.0};
  ascend_lambda(lambda, batch, f, 2.0, 0.1);
  CHECK(lambda[0] == doctest::Approx(1.0 - 0.1 * 3.0 / 3.0));
  CHECK(lambda[1] == doctest::Approx(1.0 + 0.1 * 1.0 / 3.0));
  CHECK(lambda[2] == 0.0);

  Rng rng(4);
  std::vector<double> lam(50, 0.5);
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < 50; ++i) idx[i] = i;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> dens(50);
    for (auto& v : dens) v = std::exp(numeric::normal(rng, 0.0, 2.0));
    ascend_lambda(lam, idx, dens, 1.0, 0.5);
    for (double l : lam) REQUIRE(l >= 0.0);
  }
}

TEST_CASE("lagrangian value matches the formula") {
  numeric::Tape tape;
  Matrix g(2, 1), f(2, 1);
  g.data = {1.0, -2.0};
  f.data = {3.0, 0.5};
  const std::vector<double> lam = {2.0, 4.0};
  Var loss = lagrangian(tape.constant(g), tape.constant(f), lam, 1.0);
  // −mean{1 + 2·2, −2 + 4·(−0.5)} = −mean{5, −4} = −0.5
  CHECK(loss.scalar() == doctest::Approx(-0.5));
}

TEST_CASE("zero network outputs one half and binarizes to no orders") {
  auto m = PolicyModel::init(5, 3, std::vector<std::size_t>{4}, 1);
  for (auto& e : m.params.entries()) std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
  Rng rng(2);
  const auto probs = m.act(random_matrix(7, 5, rng));
  for (double p : probs.data) CHECK(p == 0.5);
  const auto b = binarize(probs);
  for (double v : b.data) CHECK(v == 0.0);
  Matrix edge(1, 3);
  edge.data = {0.5, 0.5000001, 0.9};
  CHECK(binarize(edge).data == std::vector<double>{0, 1, 1});
}

TEST_CASE("selection score gates hard utility by the density threshold") {
  PolicyData d;
  d.contexts = Matrix(2, 3);
  d.d = Matrix(2, 2);
  d.d.data = {1.0, 2.0, 0.5, 0.5};
  d.t_min = Matrix(2, 2);
  d.t_max = Matrix(2, 2, 1.0);
  d.t_star = Matrix(2, 2);
  const auto hard = outcome_for(2, 1.0, 1.0, outcome::Mode::hard);
  Matrix actions(2, 2);
  actions.data = {1, 1, 0, 0};
  // g row 0 = 3 − 1 = 2, row 1 = 0.
  CHECK(selection_score(actions, d, nullptr, 0.0, hard) == doctest::Approx(1.0));

  // Identity flow: f(0,0) = 1/(2π) ≈ 0.159 and f(1,1) = e^−1/(2π) ≈ 0.059.
  auto g = gps::GpsModel::init(2, 3, tiny_gps(), 3);
  g.make_identity();
  d.gps_embedding = g.embed(d.contexts);
  CHECK(selection_score(actions, d, &g, 0.1, hard) == doctest::Approx(0.0));
  CHECK(selection_score(actions, d, &g, 0.05, hard) == doctest::Approx(1.0));

  const double tied[] = {0.3, 0.7, 0.7, 0.1};
  CHECK(select_best(tied) == 1);
  CHECK_THROWS_AS(select_best(std::span<const double>()), DataError);
}

TEST_CASE("select_model picks the candidate with the best validation score") {
  Rng rng(5);
  auto data = make_data(30, 4, 3, rng);
  auto hard = outcome_for(3, 1.0, 1.0, outcome::Mode::hard);
  std::vector<PolicyModel> cands;
  for (double bias : {-5.0, 5.0}) {
    auto m = PolicyModel::init(4, 3, std::vector<std::size_t>{3}, 1);
    for (auto& e : m.params.entries()) std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
    m.params.at("policy.b1").data.assign(3, bias);
    cands.push_back(m);
  }
  // With β=0 and ΔX ≥ 0, ordering everything dominates ordering nothing.
  hard.beta1 = hard.beta2 = 0.0;
  const auto best = select_model(cands, data, nullptr, 0.0, hard);
  CHECK(best.params.at("policy.b1").data[0] == 5.0);
}

TEST_CASE("policy gradients match finite differences, with and without the GPS term") {
  const std::size_t d = 4, k = 3, cdim = 72 * d, n = 6;
  Rng rng(11);
  auto data = make_data(n, cdim, k, rng);
  auto g = gps::GpsModel::init(k, cdim, tiny_gps(), 2);
  for (auto& e : g.params.entries())
    for (auto& v : e.value.data) v += numeric::normal(rng, 0.0, 0.05);
  data.gps_embedding = g.embed(data.contexts);
  Matrix eq(n, k);
  for (std::size_t i = 0; i < eq.size(); ++i) eq.data[i] = data.t_min.data[i] == data.t_max.data[i] ? 1.0 : 0.0;
  const auto oc = outcome_for(k, 2.0, 3.0, outcome::Mode::smooth);
  const std::vector<double> lam = {0.5, 1.0, 0.0, 2.0, 0.1, 0.7};

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = PolicyModel::init(cdim, k, std::vector<std::size_t>{5}, seed);
    for (bool with_gps : {false, true}) {
      numeric::LossBuilder loss = [&](numeric::Tape& tape, const numeric::BoundParams& bp) -> Var {
        Var t = policy_forward(bp, m, tape.constant(data.contexts));
        auto o = outcome::smooth_utility(t, data.d, data.t_min, eq, oc);
        if (!with_gps) return lagrangian(o.utility);
        numeric::BoundParams gp(tape, g.params, false);
        Var f = numeric::ops::exp(gps::log_density_var(gp, g, t, tape.constant(data.gps_embedding)));
        return lagrangian(o.utility, f, lam, 0.05);
      };
      const auto r = numeric::finite_diff_check(loss, m.params, 1e-6, seed, 40);
      CHECK(r.probes >= 10);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("unconstrained step with zero betas ascends the smooth information term") {
  Rng rng(8);
  auto data = make_data(64, 6, 3, rng);
  PolicyConfig cfg;
  cfg.beta1 = cfg.beta2 = 0.0;
  cfg.batch_size = 64;
  cfg.lr = 1e-3;
  cfg.use_gps = false;
  auto m = PolicyModel::init(6, 3, cfg.hidden, 3);
  GdaContext ctx;
  ctx.outcome = outcome_for(3, 0.0, 0.0, outcome::Mode::smooth);
  auto dx = [&](const PolicyModel& p) {
    numeric::Tape tape;
    numeric::BoundParams bp(tape, p.params, false);
    Var t = policy_forward(bp, p, tape.constant(data.contexts));
    return numeric::ops::mean(outcome::smooth_utility(t, data.d, data.t_min, Matrix(64, 3), ctx.outcome).delta_x)
        .scalar();
  };
  const double before = dx(m);
  auto adam = numeric::AdamState::for_params(m.params);
  std::vector<double> lambda;
  Rng order(1);
  gda_epoch(m, adam, lambda, data, ctx, cfg, order);
  CHECK(dx(m) > before);
}

TEST_CASE("GDA epochs keep every multiplier non-negative") {
  Rng rng(9);
  auto data = make_data(96, 6, 3, rng);
  auto g = gps::GpsModel::init(3, 6, tiny_gps(), 4);
  data.gps_embedding = g.embed(data.contexts);
  PolicyConfig cfg;
  cfg.batch_size = 32;
  cfg.lambda_init = 1.0;
  cfg.eta_lambda = 0.5;
  auto m = PolicyModel::init(6, 3, std::vector<std::size_t>{8}, 5);
  auto adam = numeric::AdamState::for_params(m.params);
  GdaContext ctx;
  ctx.gps = &g;
  ctx.eps = 0.05;
  ctx.outcome = outcome_for(3, 1.0, 1.0, outcome::Mode::smooth);
  std::vector<double> lambda(96, cfg.lambda_init);
  Rng order(2);
  for (int e = 0; e < 5; ++e) {
    const auto st = gda_epoch(m, adam, lambda, data, ctx, cfg, order);
    for (double l : lambda) REQUIRE(l >= 0.0);
    CHECK(st.violation_fraction >= 0.0);
    CHECK(st.violation_fraction <= 1.0);
  }
}

TEST_CASE("an overwhelming cost weight orders nothing") {
  Rng rng(12);
  auto train = make_data(200, 6, 3, rng);
  auto val = make_data(50, 6, 3, rng);
  PolicyConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 1e3;
  cfg.use_gps = false;
  cfg.hidden = {16};
  cfg.lr = 1e-2;
  cfg.max_epochs = 50;
  cfg.restarts = 1;
  const auto m = train_policy(train, val, nullptr, cfg, outcome_for(3, 0, 0, outcome::Mode::smooth));
  for (double v : binarize(m.act(val.contexts)).data) CHECK(v == 0.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Rng rng(13);
  auto train = make_data(120, 6, 3, rng);
  auto val = make_data(40, 6, 3, rng);
  PolicyConfig cfg;
  cfg.hidden = {8};
  cfg.max_epochs = 5;
  cfg.restarts = 1;
  cfg.use_gps = false;
  cfg.seed = 77;
  const auto oc = outcome_for(3, 0, 0, outcome::Mode::smooth);
  const auto a = train_policy(train, val, nullptr, cfg, oc);
  const auto b = train_policy(train, val, nullptr, cfg, oc);
  CHECK(same_params(a.params, b.params));
  CHECK(a.val_objective == b.val_objective);
  const auto c = PolicyModel::from_json(a.to_json());
  CHECK(same_params(a.params, c.params));
  CHECK(c.act(val.contexts).data == a.act(val.contexts).data);
}

TEST_CASE("use_gps without a model and bad configs are rejected") {
  Rng rng(14);
  auto data = make_data(10, 4, 2, rng);
  PolicyConfig cfg;
  cfg.use_gps = true;
  CHECK_THROWS_AS(train_policy(data, data, nullptr, cfg, outcome_for(2, 0, 0, outcome::Mode::smooth)), ConfigError);
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  PolicyConfig neg;
  neg.beta2 = -1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}

TEST_CASE("baselines return the bounds, the logged orders, and seeded coin flips") {
  Rng rng(15);
  auto data = make_data(400, 4, 5, rng);
  CHECK(baseline_orders(BaselineKind::lower, data).data == data.t_min.data);
  CHECK(baseline_orders(BaselineKind::upper, data).data == data.t_max.data);
  CHECK(baseline_orders(BaselineKind::physician, data).data == data.t_star.data);
  for (double v : baseline_orders(BaselineKind::random, data, 0.0, 1).data) CHECK(v == 0.0);
  for (double v : baseline_orders(BaselineKind::random, data, 1.0, 1).data) CHECK(v == 1.0);
  const auto a = baseline_orders(BaselineKind::random, data, 0.5, 9);
  CHECK(a.data == baseline_orders(BaselineKind::random, data, 0.5, 9).data);
  double s = 0;
  for (double v : a.data) s += v;
  CHECK(s / static_cast<double>(a.size()) == doctest::Approx(0.5).epsilon(0.1));
  CHECK_THROWS_AS(baseline_orders(BaselineKind::random, data, 1.5, 1), ConfigError);
}

TEST_CASE("on a cohort whose logged orders equal the lower bound, the policy learns the bound") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "labpolicy_test_degenerate";
  fs::remove_all(dir);
  eval::RunConfig cfg;
  cfg.cohort.n_stays = 2000;
  cfg.cohort.q = 0.0;
  cfg.cohort.r = 0.0;
  cfg.forecaster.kind = forecast::ForecastKind::carry_forward;
  cfg.policy.beta1 = 10.0;
  cfg.policy.restarts = 1;
  cfg.policy.max_epochs = 30;
  cfg.policy.patience = 30;
  eval::SeedRun run(cfg, 3, dir);
  run.generate();
  run.compute_bounds();
  run.train_forecaster();
  run.train_policy(false);
  const auto& val = run.data(eval::Split::val);
  CHECK(val.t_star.data == val.t_min.data);
  const auto act = binarize(run.policy(false).act(val.contexts));
  std::size_t match = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    bool same = true;
    for (std::size_t j = 0; j < val.k(); ++j) same = same && act(i, j) == val.t_min(i, j);
    match += same ? 1 : 0;
  }
  const double frac = static_cast<double>(match) / static_cast<double>(val.size());
  MESSAGE("exact t_min reproduction on validation: " << frac);
  CHECK(frac >= 0.95);
  fs::remove_all(dir);
}
