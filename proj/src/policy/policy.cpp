#include "labpolicy/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/ops.hpp"

namespace labpolicy::policy {

using namespace numeric;

namespace {

Matrix rows_of(const Matrix& src, std::span<const std::size_t> idx) {
  if (src.rows == 0) return src;
  Matrix out(idx.size(), src.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = src.row(idx[r]);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

Matrix equal_bounds(const Matrix& lo, const Matrix& hi) {
  Matrix eq(lo.rows, lo.cols);
  for (std::size_t i = 0; i < lo.size(); ++i) eq.data[i] = lo.data[i] == hi.data[i] ? 1.0 : 0.0;
  return eq;
}

rules::OrderBounds bounds_row(const PolicyData& d, std::size_t i) {
  rules::OrderBounds b;
  for (std::size_t j = 0; j < d.k(); ++j) {
    b.t_min.push_back(static_cast<std::uint8_t>(d.t_min(i, j)));
    b.t_max.push_back(static_cast<std::uint8_t>(d.t_max(i, j)));
  }
  return b;
}

outcome::OutcomeConfig with_betas(outcome::OutcomeConfig o, const PolicyConfig& cfg, outcome::Mode mode) {
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.mode = mode;
  return o;
}

}  // namespace

void PolicyConfig::validate() const {
  if (!(beta1 >= 0) || !(beta2 >= 0)) throw ConfigError("policy: beta1 and beta2 must be non-negative");
  if (!(lambda_init >= 0)) throw ConfigError("policy.lambda_init must be non-negative");
  if (!(eta_lambda > 0) || !(lr > 0)) throw ConfigError("policy learning rates must be positive");
  if (hidden.empty()) throw ConfigError("policy.hidden must not be empty");
  if (batch_size == 0 || max_epochs == 0) throw ConfigError("policy batch_size and max_epochs must be positive");
  if (restarts == 0) throw ConfigError("policy.restarts must be at least 1");
  if (eps_override && !(*eps_override > 0)) throw ConfigError("policy.eps_override must be positive");
}

PolicyData PolicyData::subset(std::span<const std::size_t> rows) const {
  PolicyData s;
  s.contexts = rows_of(contexts, rows);
  s.d = rows_of(d, rows);
  s.t_min = rows_of(t_min, rows);
  s.t_max = rows_of(t_max, rows);
  s.t_star = rows_of(t_star, rows);
  s.gps_embedding = rows_of(gps_embedding, rows);
  return s;
}

PolicyModel PolicyModel::init(std::size_t context_dim, std::size_t k, std::span<const std::size_t> hidden,
                              std::uint64_t seed) {
  PolicyModel m;
  m.spec.input = context_dim;
  m.spec.hidden.assign(hidden.begin(), hidden.end());
  m.spec.output = k;
  m.spec.activation = Activation::relu;
  m.seed = seed;
  m.params.seed = seed;
  Rng rng(seed);
  init_mlp(m.params, "policy", m.spec, rng);
  return m;
}

Var policy_forward(const BoundParams& p, const PolicyModel& m, Var contexts) {
  if (contexts.cols() != m.spec.input) throw NumericError("policy: context width does not match the model");
  return ops::sigmoid(mlp_forward(p, "policy", m.spec, contexts));
}

Matrix PolicyModel::act(const Matrix& contexts) const {
  if (contexts.cols != spec.input) throw NumericError("policy: context width does not match the model");
  Matrix out = mlp_apply(params, "policy", spec, contexts);
  for (auto& v : out.data) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return out;
}

Matrix binarize(const Matrix& probs) {
  Matrix b(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.size(); ++i) b.data[i] = probs.data[i] > 0.5 ? 1.0 : 0.0;
  return b;
}

nlohmann::json PolicyModel::to_json() const {
  nlohmann::json arch = spec.to_json();
  arch["kind"] = "mlp";
  nlohmann::json j = model_to_json(arch, params);
  j["training"] = {{"restart", restart}, {"epochs", epochs}, {"val_objective", val_objective}};
  return j;
}

PolicyModel PolicyModel::from_json(const nlohmann::json& j) {
  try {
    nlohmann::json arch;
    PolicyModel m;
    m.params = model_from_json(j, &arch);
    m.spec = MlpSpec::from_json(arch);
    m.seed = m.params.seed;
    const auto& t = j.at("training");
    m.restart = t.at("restart").get<std::size_t>();
    m.epochs = t.at("epochs").get<std::size_t>();
    m.val_objective = t.at("val_objective").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed policy file: ") + e.what());
  }
}

Var lagrangian(Var g, Var fhat, std::span<const double> lambda, double eps) {
  Tape& tape = *g.tape;
  Matrix lam(lambda.size(), 1);
  std::copy(lambda.begin(), lambda.end(), lam.data.begin());
  Var penalty = ops::mul(tape.constant(std::move(lam)), ops::add_scalar(fhat, -eps));
  return ops::neg(ops::mean(ops::add(g, penalty)));
}

Var lagrangian(Var g) { return ops::neg(ops::mean(g)); }

void ascend_lambda(std::vector<double>& lambda, std::span<const std::size_t> batch, std::span<const double> fhat,
                   double eps, double eta) {
  const double n = static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    double& l = lambda[batch[b]];
    l = std::max(0.0, l + eta * (-(fhat[b] - eps) / n));
  }
}

EpochStats gda_epoch(PolicyModel& model, AdamState& adam, std::vector<double>& lambda, const PolicyData& train,
                     const GdaContext& ctx, const PolicyConfig& cfg, Rng& rng) {
  const std::size_t n = train.size();
  if (n == 0) throw DataError("policy training: no training stays");
  if (ctx.gps && lambda.size() != n) throw NumericError("policy training: one multiplier per training stay");
  if (ctx.gps && train.gps_embedding.rows != n) throw DataError("policy training: GPS embeddings are missing");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const double eps = cfg.log_constraint && ctx.gps ? std::log(ctx.eps) : ctx.eps;

  EpochStats st;
  double violations = 0;
  std::size_t batch_no = 0;
  for (std::size_t s = 0; s < n; s += cfg.batch_size, ++batch_no) {
    const std::span<const std::size_t> b(idx.data() + s, std::min(n, s + cfg.batch_size) - s);
    double mean_g = NAN, mean_f = NAN;
    try {
      Tape tape;
      BoundParams bp(tape, model.params, true);
      Var t = policy_forward(bp, model, tape.constant(rows_of(train.contexts, b)));
      const Matrix lo = rows_of(train.t_min, b);
      const auto o = outcome::smooth_utility(t, rows_of(train.d, b), lo, equal_bounds(lo, rows_of(train.t_max, b)),
                                             ctx.outcome);
      mean_g = ops::mean(o.utility).scalar();
      Var loss;
      std::vector<double> fvals;
      if (ctx.gps) {
        BoundParams gp(tape, ctx.gps->params, false);
        Var lp = gps::log_density_var(gp, *ctx.gps, t, tape.constant(rows_of(train.gps_embedding, b)));
        Var f = cfg.log_constraint ? lp : ops::exp(lp);
        fvals.assign(f.value().data.begin(), f.value().data.end());
        mean_f = std::accumulate(fvals.begin(), fvals.end(), 0.0) / static_cast<double>(b.size());
        std::vector<double> lam;
        for (auto i : b) lam.push_back(lambda[i]);
        loss = lagrangian(o.utility, f, lam, eps);
      } else {
        loss = lagrangian(o.utility);
      }
      st.loss += loss.scalar() * static_cast<double>(b.size());
      tape.backward(loss);
      adam_step(adam, model.params, bp.gradients(), cfg.lr);
      if (ctx.gps) {
        for (double f : fvals) violations += f < eps ? 1.0 : 0.0;
        ascend_lambda(lambda, b, fvals, eps, cfg.eta_lambda);
      }
    } catch (const NumericError& e) {
      std::ostringstream msg;
      msg << "policy training diverged at batch " << batch_no << " (mean utility " << mean_g << ", mean density "
          << mean_f << "): " << e.what();
      throw NumericError(msg.str());
    }
  }
  st.loss /= static_cast<double>(n);
  if (ctx.gps) {
    st.mean_lambda = std::accumulate(lambda.begin(), lambda.end(), 0.0) / static_cast<double>(n);
    st.violation_fraction = violations / static_cast<double>(n);
  }
  return st;
}

double selection_score(const Matrix& actions, const PolicyData& data, const gps::GpsModel* gps, double eps,
                       const outcome::OutcomeConfig& outcome) {
  const std::size_t n = data.size();
  if (n == 0) throw DataError("selection_score: empty validation set");
  if (actions.rows != n || actions.cols != data.k()) throw NumericError("selection_score: action shape mismatch");
  std::vector<double> dens;
  if (gps) {
    dens = gps->log_density_embedded(actions, data.gps_embedding);
    for (auto& v : dens) v = std::exp(v);
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gps && !(dens[i] > eps)) continue;
    s += outcome::utility(actions.row(i), data.d.row(i), bounds_row(data, i), outcome);
  }
  return s / static_cast<double>(n);
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw DataError("select_model: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

PolicyModel select_model(const std::vector<PolicyModel>& candidates, const PolicyData& val, const gps::GpsModel* gps,
                         double eps, const outcome::OutcomeConfig& outcome) {
  if (candidates.empty()) throw DataError("select_model: no candidates");
  if (candidates.size() == 1) return candidates.front();
  std::vector<double> scores;
  for (const auto& c : candidates)
    scores.push_back(selection_score(binarize(c.act(val.contexts)), val, gps, eps, outcome));
  return candidates[select_best(scores)];
}

double constraint_threshold(const PolicyConfig& cfg, const gps::GpsModel* gps) {
  if (cfg.eps_override) return *cfg.eps_override;
  if (!gps || !gps->threshold) throw ConfigError("policy: the GPS constraint needs a reliability threshold");
  return *gps->threshold;
}

PolicyModel train_policy(const PolicyData& train, const PolicyData& val, const gps::GpsModel* gps,
                         const PolicyConfig& cfg, const outcome::OutcomeConfig& outcome,
                         std::vector<PolicyEpochLog>* log) {
  cfg.validate();
  if (train.size() == 0) throw DataError("train_policy: no training stays");
  if (cfg.use_gps && !gps) throw ConfigError("train_policy: use_gps is set but no GPS model was given");
  const PolicyData& sel = val.size() > 0 ? val : train;
  GdaContext ctx;
  ctx.gps = cfg.use_gps ? gps : nullptr;
  ctx.eps = cfg.use_gps ? constraint_threshold(cfg, gps) : 0.0;
  ctx.outcome = with_betas(outcome, cfg, outcome::Mode::smooth);
  ctx.outcome.validate();
  const auto hard = with_betas(outcome, cfg, outcome::Mode::hard);

  std::vector<PolicyModel> candidates;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    PolicyModel m = PolicyModel::init(train.contexts.cols, train.k(), cfg.hidden, derive_seed(cfg.seed, {0x90, r}));
    m.restart = r;
    AdamState adam = AdamState::for_params(m.params);
    std::vector<double> lambda(train.size(), cfg.lambda_init);
    Rng rng(derive_seed(cfg.seed, {0x91, r}));

    auto score = [&](const PolicyModel& p) {
      return selection_score(binarize(p.act(sel.contexts)), sel, ctx.gps, ctx.eps, hard);
    };
    PolicyModel best = m;
    best.val_objective = score(m);
    std::size_t since = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      const auto st = gda_epoch(m, adam, lambda, train, ctx, cfg, rng);
      const double v = score(m);
      if (log) log->push_back({r, epoch, st.loss, v, st.mean_lambda, st.violation_fraction});
      if (v > best.val_objective) {
        best = m;
        best.epochs = epoch;
        best.val_objective = v;
        since = 0;
      } else if (++since >= cfg.patience) {
        break;
      }
    }
    candidates.push_back(std::move(best));
  }
  return select_model(candidates, sel, ctx.gps, ctx.eps, hard);
}

Matrix baseline_orders(BaselineKind kind, const PolicyData& data, double p, std::uint64_t seed) {
  switch (kind) {
    case BaselineKind::random: {
      if (!(p >= 0 && p <= 1)) throw ConfigError("random baseline probability must be in [0, 1]");
      Rng rng(derive_seed(seed, {0xBA5E}));
      Matrix t(data.size(), data.k());
      for (auto& v : t.data) v = bernoulli(rng, p) ? 1.0 : 0.0;
      return t;
    }
    case BaselineKind::lower:
      return data.t_min;
    case BaselineKind::upper:
      return data.t_max;
    case BaselineKind::physician:
      return data.t_star;
  }
  throw ConfigError("unknown baseline");
}

}  // namespace labpolicy::policy
