#include "labpolicy/gps/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/mlp.hpp"
#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/numeric/optim.hpp"

namespace labpolicy::gps {

using namespace numeric;

namespace {

constexpr double kMinDeriv = 1e-3;
// softplus(raw + kDerivShift) + kMinDeriv = 1 at raw = 0
const double kDerivShift = std::log(std::expm1(1.0 - kMinDeriv));

std::string layer_name(std::size_t l, const char* part) { return "layer" + std::to_string(l) + "." + part; }

std::size_t params_per_dim(const GpsConfig& a) { return 2 * a.bins - 1; }

MlpSpec context_spec(const GpsModel& m) {
  MlpSpec s;
  s.input = m.context_dim;
  s.hidden.assign(m.arch.context_hidden.begin(), m.arch.context_hidden.end() - 1);
  s.output = m.arch.context_hidden.back();
  s.activation = Activation::tanh;
  return s;
}

// Autoregressive degrees: input j has degree j+1, hidden unit h has degree in
// [1, K−1]; a hidden unit sees inputs of lower or equal degree and feeds
// output dims of strictly higher degree.
std::size_t hidden_degree(std::size_t h, std::size_t k) { return k <= 1 ? 1 : 1 + h % (k - 1); }

Matrix input_mask(std::size_t k, std::size_t hidden) {
  Matrix m(k, hidden, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t h = 0; h < hidden; ++h) m(j, h) = (j + 1 <= hidden_degree(h, k)) ? 1.0 : 0.0;
  return m;
}

Matrix output_mask(std::size_t k, std::size_t hidden, std::size_t per_dim) {
  Matrix m(hidden, k * per_dim, 0.0);
  for (std::size_t h = 0; h < hidden; ++h)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < per_dim; ++c) m(h, i * per_dim + c) = hidden_degree(h, k) <= i ? 1.0 : 0.0;
  return m;
}

Matrix reversal(std::size_t k) {
  Matrix m(k, k, 0.0);
  for (std::size_t i = 0; i < k; ++i) m(i, k - 1 - i) = 1.0;
  return m;
}

// Raw spline parameters n×(K·P) for one layer.
Var conditioner(const BoundParams& p, const GpsModel& m, std::size_t l, Var u, Var emb) {
  Tape& tape = *u.tape;
  const std::size_t P = params_per_dim(m.arch);
  Var w1 = ops::mul(p[layer_name(l, "w_in")], tape.constant(input_mask(m.k, m.arch.made_hidden)));
  Var hid = ops::relu(ops::add(ops::add(ops::matmul(u, w1), ops::matmul(emb, p[layer_name(l, "w_ctx")])),
                               p[layer_name(l, "b_hidden")]));
  Var w2 = ops::mul(p[layer_name(l, "w_out")], tape.constant(output_mask(m.k, m.arch.made_hidden, P)));
  return ops::add(ops::add(ops::matmul(hid, w2), ops::matmul(emb, p[layer_name(l, "w_direct")])),
                  p[layer_name(l, "b_out")]);
}

struct SplineKnots {
  std::vector<double> y;  // nb+1 knot heights, y[0] = −B, y[nb] = B
  std::vector<double> delta;  // nb+1 knot derivatives
};

SplineKnots knots_from_raw(std::span<const double> raw, std::size_t nb, double bound) {
  SplineKnots k;
  const double mx = *std::max_element(raw.begin(), raw.begin() + static_cast<long>(nb));
  std::vector<double> e(nb);
  double z = 0;
  for (std::size_t b = 0; b < nb; ++b) z += (e[b] = std::exp(raw[b] - mx));
  k.y.assign(nb + 1, -bound);
  double acc = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    acc += 2 * bound * (e[b] / z);
    k.y[b + 1] = acc - bound;
  }
  k.delta.assign(nb + 1, 1.0);
  for (std::size_t b = 1; b < nb; ++b) {
    const double x = raw[nb + b - 1] + kDerivShift;
    k.delta[b] = (x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x))) + kMinDeriv;
  }
  return k;
}

// Spline value and log slope at x, for the density direction.
std::pair<double, double> spline_eval(const SplineKnots& kn, double x, std::size_t nb, double bound) {
  if (x < -bound || x > bound) return {x, 0.0};
  const double w = 2 * bound / static_cast<double>(nb);
  const std::size_t b = std::min(nb - 1, static_cast<std::size_t>(std::floor((x + bound) / w)));
  const double xi = (x - (-bound + static_cast<double>(b) * w)) / w;
  const double h = kn.y[b + 1] - kn.y[b], s = h / w;
  const double d0 = kn.delta[b], d1 = kn.delta[b + 1];
  const double q = xi * (1 - xi);
  const double den = s + (d1 + d0 - 2 * s) * q;
  const double g = kn.y[b] + h * (s * xi * xi + d0 * q) / den;
  const double dg = s * s * (d1 * xi * xi + 2 * s * q + d0 * (1 - xi) * (1 - xi)) / (den * den);
  return {g, std::log(dg)};
}

double spline_invert(const SplineKnots& kn, double y, std::size_t nb, double bound) {
  if (y < -bound || y > bound) return y;
  const double w = 2 * bound / static_cast<double>(nb);
  std::size_t b = static_cast<std::size_t>(std::upper_bound(kn.y.begin() + 1, kn.y.end() - 1, y) - kn.y.begin()) - 1;
  b = std::min(b, nb - 1);
  const double h = kn.y[b + 1] - kn.y[b], s = h / w;
  const double d0 = kn.delta[b], d1 = kn.delta[b + 1];
  const double dy = y - kn.y[b];
  const double a = h * (s - d0) + dy * (d1 + d0 - 2 * s);
  const double bb = h * d0 - dy * (d1 + d0 - 2 * s);
  const double c = -s * dy;
  const double disc = std::max(0.0, bb * bb - 4 * a * c);
  const double xi = std::clamp(2 * c / (-bb - std::sqrt(disc)), 0.0, 1.0);
  return -bound + (static_cast<double>(b) + xi) * w;
}

// One spline layer in the density direction: returns (z, n×1 log slope sum).
std::pair<Var, Var> spline_layer(const BoundParams& p, const GpsModel& m, std::size_t l, Var u, Var emb) {
  Tape& tape = *u.tape;
  const std::size_t n = u.rows(), K = m.k, nb = m.arch.bins, P = params_per_dim(m.arch);
  const double B = m.arch.bound, w = 2 * B / static_cast<double>(nb);
  Var raw = conditioner(p, m, l, u, emb);
  std::vector<Var> outs, logs;
  for (std::size_t i = 0; i < K; ++i) {
    Var x = ops::slice_cols(u, i, i + 1);
    Var heights = ops::scale(ops::softmax_rows(ops::slice_cols(raw, i * P, i * P + nb)), 2 * B);
    Var cum = ops::cumsum_cols(heights);
    Var inner = ops::add_scalar(ops::softplus(ops::add_scalar(ops::slice_cols(raw, i * P + nb, (i + 1) * P), kDerivShift)),
                                kMinDeriv);
    Var ones = tape.constant(Matrix(n, 1, 1.0));
    Var derivs = ops::concat_cols({ones, inner, ones});

    std::vector<std::size_t> bin(n), bin_next(n);
    Matrix in_range(n, 1), out_range(n, 1), xi_scale(n, 1), xi_shift(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
      const double xv = x.value()(r, 0);
      const bool inside = xv >= -B && xv <= B;
      bin[r] = inside ? std::min(nb - 1, static_cast<std::size_t>(std::floor((xv + B) / w))) : 0;
      bin_next[r] = bin[r] + 1;
      in_range(r, 0) = inside ? 1.0 : 0.0;
      out_range(r, 0) = inside ? 0.0 : 1.0;
      xi_scale(r, 0) = inside ? 1.0 / w : 0.0;
      xi_shift(r, 0) = inside ? -(-B + static_cast<double>(bin[r]) * w) / w : 0.5;
    }
    Var h = ops::gather_cols(heights, bin);
    Var y0 = ops::add_scalar(ops::sub(ops::gather_cols(cum, bin), h), -B);
    Var d0 = ops::gather_cols(derivs, bin);
    Var d1 = ops::gather_cols(derivs, bin_next);
    Var s = ops::scale(h, 1.0 / w);
    Var xi = ops::add(ops::mul(x, tape.constant(xi_scale)), tape.constant(xi_shift));
    Var one_minus = ops::add_scalar(ops::neg(xi), 1.0);
    Var q = ops::mul(xi, one_minus);
    Var xi2 = ops::square(xi);
    Var slope_sum = ops::sub(ops::add(d1, d0), ops::scale(s, 2.0));
    Var den = ops::add(s, ops::mul(slope_sum, q));
    Var num = ops::mul(h, ops::add(ops::mul(s, xi2), ops::mul(d0, q)));
    Var g = ops::add(y0, ops::div(num, den));
    Var dnum = ops::add(ops::add(ops::mul(d1, xi2), ops::scale(ops::mul(s, q), 2.0)), ops::mul(d0, ops::square(one_minus)));
    Var dg = ops::div(ops::mul(ops::square(s), dnum), ops::square(den));
    Var mask_in = tape.constant(in_range);
    outs.push_back(ops::add(ops::mul(mask_in, g), ops::mul(tape.constant(out_range), x)));
    logs.push_back(ops::mul(mask_in, ops::log(dg)));
  }
  return {ops::concat_cols(outs), ops::row_sum(ops::concat_cols(logs))};
}

// Density-direction pass: (z, log|det ∂z/∂t|).
std::pair<Var, Var> inverse_pass(const BoundParams& p, const GpsModel& m, Var t, Var emb) {
  Tape& tape = *t.tape;
  if (t.cols() != m.k) throw NumericError("gps: order vectors have the wrong length");
  Var u = t;
  Var total;
  const Matrix rev = reversal(m.k);
  for (std::size_t l = 0; l < m.arch.layers; ++l) {
    if (l > 0) u = ops::matmul(u, tape.constant(rev));
    auto [z, ld] = spline_layer(p, m, l, u, emb);
    u = z;
    total = l == 0 ? ld : ops::add(total, ld);
  }
  return {u, total};
}

std::vector<double> column(const Matrix& m) { return std::vector<double>(m.data.begin(), m.data.end()); }

Matrix rows_of(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = src.row(idx[r]);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

Matrix dequantize(const Matrix& t, double sd, Rng& rng) {
  Matrix out = t;
  for (auto& v : out.data) v += normal(rng, 0.0, sd);
  return out;
}

}  // namespace

void GpsConfig::validate() const {
  if (layers == 0 || bins < 2) throw ConfigError("gps: need at least one layer and two bins");
  if (!(bound > 0)) throw ConfigError("gps.bound must be positive");
  if (context_hidden.empty()) throw ConfigError("gps.context_hidden must not be empty");
  for (auto h : context_hidden)
    if (h == 0) throw ConfigError("gps.context_hidden sizes must be positive");
  if (made_hidden == 0) throw ConfigError("gps.made_hidden must be positive");
  if (!(dequant_sd >= 0)) throw ConfigError("gps.dequant_sd must be non-negative");
  if (lr_grid.empty()) throw ConfigError("gps.lr_grid must not be empty");
  for (double lr : lr_grid)
    if (!(lr > 0)) throw ConfigError("gps learning rates must be positive");
  if (batch_size == 0 || max_epochs == 0) throw ConfigError("gps batch_size and max_epochs must be positive");
  if (!(quantile > 0 && quantile <= 1)) throw ConfigError("gps.quantile must be in (0, 1]");
}

nlohmann::json GpsConfig::arch_json() const {
  return {{"layers", layers},           {"bins", bins},
          {"bound", bound},             {"context_hidden", context_hidden},
          {"made_hidden", made_hidden}, {"dequant_sd", dequant_sd}};
}

GpsModel GpsModel::init(std::size_t k, std::size_t context_dim, const GpsConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (k == 0 || context_dim == 0) throw ConfigError("gps: order and context sizes must be positive");
  GpsModel m;
  m.k = k;
  m.context_dim = context_dim;
  m.arch = cfg;
  m.params.seed = seed;
  Rng rng(seed);
  init_mlp(m.params, "context", context_spec(m), rng);
  const std::size_t E = m.embed_dim(), H = cfg.made_hidden, out = k * params_per_dim(cfg);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    m.params.add(layer_name(l, "w_in"), glorot_uniform(k, H, rng));
    m.params.add(layer_name(l, "w_ctx"), glorot_uniform(E, H, rng));
    m.params.add(layer_name(l, "b_hidden"), Matrix(1, H, 0.0));
    // small output weights: every layer starts close to the identity
    Matrix w_out = glorot_uniform(H, out, rng), w_direct = glorot_uniform(E, out, rng);
    for (auto& v : w_out.data) v *= 0.1;
    for (auto& v : w_direct.data) v *= 0.1;
    m.params.add(layer_name(l, "w_out"), std::move(w_out));
    m.params.add(layer_name(l, "w_direct"), std::move(w_direct));
    m.params.add(layer_name(l, "b_out"), Matrix(1, out, 0.0));
  }
  return m;
}

void GpsModel::make_identity() {
  for (std::size_t l = 0; l < arch.layers; ++l)
    for (const char* part : {"w_out", "w_direct", "b_out"}) params.at(layer_name(l, part)).fill(0.0);
}

Var embed_var(const BoundParams& p, const GpsModel& m, Var contexts) {
  if (contexts.cols() != m.context_dim) throw NumericError("gps: context width does not match the model");
  return ops::tanh(mlp_forward(p, "context", context_spec(m), contexts));
}

Var log_density_var(const BoundParams& p, const GpsModel& m, Var t, Var embedding) {
  auto [z, logdet] = inverse_pass(p, m, t, embedding);
  const double norm = 0.5 * static_cast<double>(m.k) * std::log(2 * std::numbers::pi);
  return ops::add(ops::add_scalar(ops::scale(ops::row_sum(ops::square(z)), -0.5), -norm), logdet);
}

Matrix GpsModel::embed(const Matrix& contexts) const {
  Tape tape;
  BoundParams bp(tape, params, false);
  return embed_var(bp, *this, tape.constant(contexts)).value();
}

std::pair<Matrix, std::vector<double>> GpsModel::flow_inverse(const Matrix& t, const Matrix& embedding) const {
  Tape tape;
  BoundParams bp(tape, params, false);
  auto [z, ld] = inverse_pass(bp, *this, tape.constant(t), tape.constant(embedding));
  return {z.value(), column(ld.value())};
}

std::pair<Matrix, std::vector<double>> GpsModel::flow_forward(const Matrix& z, const Matrix& embedding) const {
  if (z.cols != k) throw NumericError("gps: base samples have the wrong length");
  const std::size_t n = z.rows, nb = arch.bins, P = params_per_dim(arch);
  std::vector<double> logdet(n, 0.0);
  Matrix y = z;
  for (std::size_t l = arch.layers; l-- > 0;) {
    Matrix u(n, k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      Tape tape;
      BoundParams bp(tape, params, false);
      const Matrix raw = conditioner(bp, *this, l, tape.constant(u), tape.constant(embedding)).value();
      for (std::size_t r = 0; r < n; ++r) {
        const auto kn = knots_from_raw(raw.row(r).subspan(i * P, P), nb, arch.bound);
        u(r, i) = spline_invert(kn, y(r, i), nb, arch.bound);
        logdet[r] -= spline_eval(kn, u(r, i), nb, arch.bound).second;
      }
    }
    if (l > 0)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < k; ++i) y(r, i) = u(r, k - 1 - i);
    else
      y = u;
  }
  return {y, logdet};
}

std::vector<double> GpsModel::log_density_embedded(const Matrix& t, const Matrix& embedding) const {
  std::vector<double> out;
  out.reserve(t.rows);
  constexpr std::size_t chunk = 4096;
  for (std::size_t s = 0; s < t.rows; s += chunk) {
    std::vector<std::size_t> idx(std::min(t.rows, s + chunk) - s);
    std::iota(idx.begin(), idx.end(), s);
    Tape tape;
    BoundParams bp(tape, params, false);
    const Var lp = log_density_var(bp, *this, tape.constant(rows_of(t, idx)),
                                   tape.constant(embedding.rows == 1 ? Matrix(embedding) : rows_of(embedding, idx)));
    const auto v = column(lp.value());
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<double> GpsModel::log_density(const Matrix& t, const Matrix& contexts) const {
  if (t.rows != contexts.rows) throw NumericError("gps: one context per order vector required");
  return log_density_embedded(t, embed(contexts));
}

nlohmann::json GpsModel::to_json() const {
  nlohmann::json arch_j = arch.arch_json();
  arch_j["kind"] = "conditional_spline_flow";
  arch_j["k"] = k;
  arch_j["context_dim"] = context_dim;
  nlohmann::json j = model_to_json(arch_j, params);
  j["threshold"] = threshold ? nlohmann::json(*threshold) : nlohmann::json(nullptr);
  j["training"] = {{"epochs", epochs}, {"val_nll", val_nll}, {"lr", lr}};
  return j;
}

GpsModel GpsModel::from_json(const nlohmann::json& j) {
  try {
    nlohmann::json a;
    GpsModel m;
    m.params = model_from_json(j, &a);
    m.k = a.at("k").get<std::size_t>();
    m.context_dim = a.at("context_dim").get<std::size_t>();
    m.arch.layers = a.at("layers").get<std::size_t>();
    m.arch.bins = a.at("bins").get<std::size_t>();
    m.arch.bound = a.at("bound").get<double>();
    m.arch.context_hidden = a.at("context_hidden").get<std::vector<std::size_t>>();
    m.arch.made_hidden = a.at("made_hidden").get<std::size_t>();
    m.arch.dequant_sd = a.at("dequant_sd").get<double>();
    if (!j.at("threshold").is_null()) m.threshold = j.at("threshold").get<double>();
    const auto& t = j.at("training");
    m.epochs = t.at("epochs").get<std::size_t>();
    m.val_nll = t.at("val_nll").get<double>();
    m.lr = t.at("lr").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed gps file: ") + e.what());
  }
}

double mean_nll(const GpsModel& m, const Matrix& t, const Matrix& contexts) {
  const auto lp = m.log_density(t, contexts);
  if (lp.empty()) throw DataError("mean_nll: no rows");
  return -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
}

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("nearest_rank: no values");
  if (!(q > 0 && q <= 1)) throw ConfigError("quantile must be in (0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q * static_cast<double>(values.size()) - 1e-9);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size())));
  return values[idx - 1];
}

double reliability_threshold(const GpsModel& m, const Matrix& t, const Matrix& contexts, double q) {
  auto lp = m.log_density(t, contexts);
  for (auto& v : lp) v = std::exp(v);
  return nearest_rank(std::move(lp), q);
}

GpsModel train_gps(const Matrix& train_t, const Matrix& train_ctx, const Matrix& val_t, const Matrix& val_ctx,
                   const GpsConfig& cfg, std::vector<GpsEpochLog>* log) {
  cfg.validate();
  if (train_t.rows == 0) throw DataError("train_gps: no training orders");
  if (train_t.rows != train_ctx.rows || val_t.rows != val_ctx.rows)
    throw DataError("train_gps: one context per order vector required");
  const std::size_t n = train_t.rows;
  const bool has_val = val_t.rows > 0;
  Rng val_rng(derive_seed(cfg.seed, {0x6C}));
  const Matrix val_noisy = dequantize(has_val ? val_t : train_t, cfg.dequant_sd, val_rng);
  const Matrix& val_c = has_val ? val_ctx : train_ctx;

  GpsModel best;
  double best_nll = INFINITY;
  for (std::size_t g = 0; g < cfg.lr_grid.size(); ++g) {
    const double lr = cfg.lr_grid[g];
    GpsModel m = GpsModel::init(train_t.cols, train_ctx.cols, cfg, derive_seed(cfg.seed, {0x6A, g}));
    m.lr = lr;
    AdamState adam = AdamState::for_params(m.params);
    Rng rng(derive_seed(cfg.seed, {0x6B, g}));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    GpsModel run_best = m;
    double run_nll = mean_nll(m, val_noisy, val_c);
    run_best.val_nll = run_nll;
    std::size_t since = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      double loss_sum = 0;
      // a diverging learning rate ends its run; earlier snapshots stand
      try {
      for (std::size_t s = 0; s < n; s += cfg.batch_size) {
        const std::span<const std::size_t> b(idx.data() + s, std::min(n, s + cfg.batch_size) - s);
        Tape tape;
        BoundParams bp(tape, m.params, true);
        Var emb = embed_var(bp, m, tape.constant(rows_of(train_ctx, b)));
        Var lp = log_density_var(bp, m, tape.constant(dequantize(rows_of(train_t, b), cfg.dequant_sd, rng)), emb);
        Var loss = ops::neg(ops::mean(lp));
        loss_sum += loss.scalar() * static_cast<double>(b.size());
        tape.backward(loss);
        adam_step(adam, m.params, bp.gradients(), lr);
      }
      } catch (const NumericError&) {
        break;
      }
      double v;
      try {
        v = mean_nll(m, val_noisy, val_c);
      } catch (const NumericError&) {
        break;
      }
      if (log) log->push_back({lr, epoch, loss_sum / static_cast<double>(n), v});
      if (v < run_nll) {
        run_nll = v;
        run_best = m;
        run_best.epochs = epoch;
        run_best.val_nll = v;
        since = 0;
      } else if (++since >= cfg.patience) {
        break;
      }
    }
    if (run_nll < best_nll) {
      best_nll = run_nll;
      best = std::move(run_best);
    }
  }
  return best;
}

}  // namespace labpolicy::gps
