#include "labpolicy/forecast/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/numeric/optim.hpp"

namespace labpolicy::forecast {

using namespace numeric;
constexpr std::size_t L1 = core::kPrevHours;
constexpr std::size_t L2 = core::kPostHours;

void ForecastConfig::validate() const {
  if (patch_len == 0 || L1 % patch_len != 0) throw ConfigError("forecaster.patch_len must divide 48");
  if (embed_dim == 0 || hidden == 0) throw ConfigError("forecaster sizes must be positive");
  if (lr_grid.empty()) throw ConfigError("forecaster.lr_grid must not be empty");
  for (double lr : lr_grid)
    if (!(lr > 0)) throw ConfigError("forecaster learning rates must be positive");
  if (batch_size == 0 || max_epochs == 0) throw ConfigError("forecaster batch_size and max_epochs must be positive");
}

ForecastModel ForecastModel::carry_forward(std::size_t d) {
  ForecastModel m;
  m.kind = ForecastKind::carry_forward;
  m.d = d;
  return m;
}

ForecastModel ForecastModel::init_patch_mlp(std::size_t d, const ForecastConfig& cfg, std::uint64_t seed) {
  ForecastModel m;
  m.kind = ForecastKind::patch_mlp;
  m.d = d;
  m.patch_len = cfg.patch_len;
  m.embed_dim = cfg.embed_dim;
  m.hidden = cfg.hidden;
  m.seed = seed;
  Rng rng(seed);
  const std::size_t patches = L1 / cfg.patch_len;
  m.params.seed = seed;
  m.params.add("embed.w", glorot_uniform(cfg.patch_len, cfg.embed_dim, rng));
  m.params.add("embed.b", Matrix(1, cfg.embed_dim, 0.0));
  m.params.add("hidden.w", glorot_uniform(d * patches * cfg.embed_dim, cfg.hidden, rng));
  m.params.add("hidden.b", Matrix(1, cfg.hidden, 0.0));
  // Starts as carry-forward: the linear path copies hour 47 and the head is
  // zero, so training only keeps snapshots that beat persistence.
  m.params.add("head.w", Matrix(cfg.hidden, d * L2, 0.0));
  m.params.add("head.b", Matrix(1, d * L2, 0.0));
  Matrix persist(L1, L2, 0.0);
  for (std::size_t h = 0; h < L2; ++h) persist(L1 - 1, h) = 1.0;
  m.params.add("linear.w", std::move(persist));
  m.params.add("linear.b", Matrix(1, L2, 0.0));
  return m;
}

Var forecast_forward(Tape& tape, const BoundParams& p, const ForecastModel& m,
                  const std::vector<const Matrix*>& batch) {
  const std::size_t n = batch.size(), d = m.d, P = L1 / m.patch_len;
  Matrix patches(n * d * P, m.patch_len);
  Matrix series(n * d, L1);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& x = *batch[i];
    if (x.rows != L1 || x.cols != d) throw NumericError("forecaster: expected a 48xd input");
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t h = 0; h < L1; ++h) {
        const double v = x(h, f);
        series(i * d + f, h) = v;
        patches((i * d + f) * P + h / m.patch_len, h % m.patch_len) = v;
      }
  }
  Var emb = ops::relu(ops::linear(tape.constant(std::move(patches)), p["embed.w"], p["embed.b"]));
  Var flat = ops::reshape(emb, n, d * P * m.embed_dim);
  Var hid = ops::relu(ops::linear(flat, p["hidden.w"], p["hidden.b"]));
  Var head = ops::linear(hid, p["head.w"], p["head.b"]);
  Var lin = ops::reshape(ops::linear(tape.constant(std::move(series)), p["linear.w"], p["linear.b"]), n, d * L2);
  return ops::add(head, lin);
}

namespace {

Matrix to_hour_major(std::span<const double> row, std::size_t d) {
  Matrix out(L2, d);
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t h = 0; h < L2; ++h) out(h, f) = row[f * L2 + h];
  return out;
}

void to_feature_major(const Matrix& x, std::span<double> out) {
  for (std::size_t f = 0; f < x.cols; ++f)
    for (std::size_t h = 0; h < L2; ++h) out[f * L2 + h] = x(h, f);
}

}  // namespace

std::vector<Matrix> ForecastModel::predict_many(const std::vector<const Matrix*>& xs) const {
  std::vector<Matrix> out;
  out.reserve(xs.size());
  if (kind == ForecastKind::carry_forward) {
    for (const Matrix* x : xs) {
      if (x->rows != L1 || x->cols != d) throw NumericError("forecaster: expected a 48xd input");
      Matrix y(L2, d);
      for (std::size_t h = 0; h < L2; ++h)
        for (std::size_t f = 0; f < d; ++f) y(h, f) = (*x)(L1 - 1, f);
      out.push_back(std::move(y));
    }
    return out;
  }
  constexpr std::size_t chunk = 256;
  for (std::size_t s = 0; s < xs.size(); s += chunk) {
    std::vector<const Matrix*> batch(xs.begin() + static_cast<long>(s),
                                     xs.begin() + static_cast<long>(std::min(xs.size(), s + chunk)));
    Tape tape;
    BoundParams bp(tape, params, false);
    const Matrix& y = forecast_forward(tape, bp, *this, batch).value();
    for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(to_hour_major(y.row(i), d));
  }
  return out;
}

Matrix ForecastModel::predict(const Matrix& x_prev) const { return predict_many({&x_prev}).front(); }

nlohmann::json ForecastModel::to_json() const {
  nlohmann::json arch = {{"kind", kind == ForecastKind::patch_mlp ? "patch_mlp" : "carry_forward"},
                         {"d", d},
                         {"patch_len", patch_len},
                         {"embed_dim", embed_dim},
                         {"hidden", hidden}};
  nlohmann::json j = model_to_json(arch, params);
  j["seed"] = seed;
  j["training"] = {{"epochs", epochs}, {"val_mse", val_mse}, {"lr", lr}};
  return j;
}

ForecastModel ForecastModel::from_json(const nlohmann::json& j) {
  try {
    nlohmann::json arch;
    ForecastModel m;
    m.params = model_from_json(j, &arch);
    const auto kind = arch.at("kind").get<std::string>();
    if (kind == "patch_mlp")
      m.kind = ForecastKind::patch_mlp;
    else if (kind == "carry_forward")
      m.kind = ForecastKind::carry_forward;
    else
      throw DataError("unknown forecaster kind '" + kind + "'");
    m.d = arch.at("d").get<std::size_t>();
    m.patch_len = arch.at("patch_len").get<std::size_t>();
    m.embed_dim = arch.at("embed_dim").get<std::size_t>();
    m.hidden = arch.at("hidden").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& t = j.at("training");
    m.epochs = t.at("epochs").get<std::size_t>();
    m.val_mse = t.at("val_mse").get<double>();
    m.lr = t.at("lr").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed forecaster file: ") + e.what());
  }
}

double mse(const Matrix& pred, const Matrix& truth, const Matrix* mask) {
  if (!pred.same_shape(truth) || (mask && !mask->same_shape(pred))) throw NumericError("mse: shape mismatch");
  double s = 0, n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = mask ? mask->data[i] : 1.0;
    if (w == 0) continue;
    const double e = pred.data[i] - truth.data[i];
    s += w * e * e;
    n += w;
  }
  if (n == 0) throw NumericError("mse: no cells to score");
  return s / n;
}

double dataset_mse(const ForecastModel& model, const std::vector<ForecastSample>& data, bool masked) {
  std::vector<const Matrix*> xs;
  for (const auto& s : data) xs.push_back(s.x_prev);
  const auto preds = model.predict_many(xs);
  double s = 0, n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Matrix* mask = masked ? data[i].post_mask : nullptr;
    double cells = static_cast<double>(preds[i].size());
    if (mask) {
      cells = 0;
      for (double v : mask->data) cells += v;
      if (cells == 0) continue;
    }
    s += mse(preds[i], *data[i].x_post, mask) * cells;
    n += cells;
  }
  if (n == 0) throw DataError("dataset_mse: nothing to score");
  return s / n;
}

std::vector<ForecastSample> forecast_samples(const std::vector<const core::StayWindow*>& windows) {
  std::vector<ForecastSample> out;
  for (const auto* w : windows)
    if (w->x_post_true) out.push_back({&w->x_prev, &*w->x_post_true, &*w->obs_mask_post});
  return out;
}

ForecastModel train_forecaster(const std::vector<ForecastSample>& train, const std::vector<ForecastSample>& val,
                               std::size_t d, const ForecastConfig& cfg, std::vector<ForecastEpochLog>* log) {
  cfg.validate();
  if (train.empty()) throw DataError("train_forecaster: no training stay has an observed future");
  if (cfg.kind == ForecastKind::carry_forward) {
    ForecastModel m = ForecastModel::carry_forward(d);
    m.val_mse = val.empty() ? 0.0 : dataset_mse(m, val, cfg.masked_loss);
    return m;
  }
  const auto& score_set = val.empty() ? train : val;

  ForecastModel best;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < cfg.lr_grid.size(); ++g) {
    const double lr = cfg.lr_grid[g];
    ForecastModel m = ForecastModel::init_patch_mlp(d, cfg, derive_seed(cfg.seed, {0xF0ull, g}));
    m.lr = lr;
    AdamState adam = AdamState::for_params(m.params);
    Rng order_rng(derive_seed(cfg.seed, {0xF1ull, g}));
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);

    ForecastModel run_best = m;
    double run_best_val = dataset_mse(m, score_set, cfg.masked_loss);
    run_best.val_mse = run_best_val;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), order_rng);
      for (std::size_t s = 0; s < idx.size(); s += cfg.batch_size) {
        const std::size_t e = std::min(idx.size(), s + cfg.batch_size);
        std::vector<const Matrix*> xs;
        Matrix target(e - s, d * L2), mask(e - s, d * L2, 1.0);
        for (std::size_t b = s; b < e; ++b) {
          const auto& smp = train[idx[b]];
          xs.push_back(smp.x_prev);
          to_feature_major(*smp.x_post, target.row(b - s));
          if (cfg.masked_loss) to_feature_major(*smp.post_mask, mask.row(b - s));
        }
        double cells = 0;
        for (double v : mask.data) cells += v;
        if (cells == 0) continue;
        Tape tape;
        BoundParams bp(tape, m.params, true);
        Var pred = forecast_forward(tape, bp, m, xs);
        Var err = ops::mul(ops::square(ops::sub(pred, tape.constant(std::move(target)))), tape.constant(mask));
        Var loss = ops::scale(ops::sum(err), 1.0 / cells);
        tape.backward(loss);
        adam_step(adam, m.params, bp.gradients(), lr);
      }
      const double v = dataset_mse(m, score_set, cfg.masked_loss);
      if (log) log->push_back({lr, epoch, dataset_mse(m, train, cfg.masked_loss), v});
      if (v < run_best_val) {
        run_best_val = v;
        run_best = m;
        run_best.epochs = epoch;
        run_best.val_mse = v;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    if (run_best_val < best_val) {
      best_val = run_best_val;
      best = std::move(run_best);
    }
  }
  return best;
}

}  // namespace labpolicy::forecast
