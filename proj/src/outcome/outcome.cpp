#include "labpolicy/outcome/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labpolicy/error.hpp"

namespace labpolicy::outcome {

std::vector<double> OutcomeConfig::uniform_costs(std::size_t k) {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

std::vector<double> OutcomeConfig::real_costs() {
  const double total = std::accumulate(std::begin(kRealCostsUsd), std::end(kRealCostsUsd), 0.0);
  std::vector<double> a;
  for (double c : kRealCostsUsd) a.push_back(c / total);
  return a;
}

void OutcomeConfig::validate() const {
  if (!(beta1 >= 0) || !(beta2 >= 0)) throw ConfigError("outcome: beta1 and beta2 must be non-negative");
  if (!(k > 0)) throw ConfigError("outcome: sharpness k must be positive");
  double s = 0;
  for (double a : alpha) {
    if (!(a >= 0)) throw ConfigError("outcome: costs must be non-negative");
    s += a;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("outcome: costs must sum to 1");
}

double indicator(double t, double k, Mode mode) {
  if (mode == Mode::hard) return t > 0.5 ? 1.0 : 0.0;
  const double x = k * (t - 0.5);
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double smooth_abs(double u) { return std::sqrt(u * u + 1e-8); }

FeatureSummary summarize_prev(const Matrix& x_prev, const Matrix& mask, std::size_t f) {
  FeatureSummary s{0.0, INFINITY, -INFINITY};
  std::size_t n = 0;
  for (std::size_t h = 0; h < x_prev.rows; ++h) {
    if (mask(h, f) == 0) continue;
    const double v = x_prev(h, f);
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    ++n;
  }
  if (n == 0) return summarize_post(x_prev, f);
  s.mean /= static_cast<double>(n);
  return s;
}

FeatureSummary summarize_post(const Matrix& x, std::size_t f) {
  FeatureSummary s{0.0, INFINITY, -INFINITY};
  for (std::size_t h = 0; h < x.rows; ++h) {
    const double v = x(h, f);
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean /= static_cast<double>(x.rows);
  return s;
}

std::vector<PanelChange> panel_changes(const Matrix& x_prev, const Matrix& mask, const Matrix& x_post,
                                       const core::FeatureCatalog& catalog, bool panel_average) {
  if (x_prev.cols != catalog.d() || x_post.cols != catalog.d() || !mask.same_shape(x_prev))
    throw DataError("panel_changes: window width does not match the catalog");
  std::vector<PanelChange> out(catalog.k());
  for (std::size_t j = 0; j < catalog.k(); ++j) {
    const auto& feats = catalog.panel_features(j);
    for (std::size_t f : feats) {
      const auto p = summarize_prev(x_prev, mask, f);
      const auto q = summarize_post(x_post, f);
      out[j].avg += std::abs(p.mean - q.mean);
      out[j].range += std::max(std::abs(p.max - q.max), std::abs(p.min - q.min));
    }
    if (panel_average && !feats.empty()) {
      out[j].avg /= static_cast<double>(feats.size());
      out[j].range /= static_cast<double>(feats.size());
    }
  }
  return out;
}

std::vector<double> panel_totals(const std::vector<PanelChange>& changes) {
  std::vector<double> d;
  for (const auto& c : changes) d.push_back(c.total());
  return d;
}

double delta_x(std::span<const double> t, std::span<const double> d, double k, Mode mode) {
  double s = 0;
  for (std::size_t j = 0; j < t.size(); ++j) s += indicator(t[j], k, mode) * d[j];
  return s;
}

double bound_loss(std::span<const double> t, const rules::OrderBounds& b, Mode mode) {
  double s = 0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (b.t_min[j] != b.t_max[j]) continue;
    const double u = static_cast<double>(b.t_min[j]) - t[j];
    s += mode == Mode::hard ? std::abs(u) : smooth_abs(u);
  }
  return s;
}

double cost(std::span<const double> t, std::span<const double> alpha, double k, Mode mode) {
  double s = 0;
  for (std::size_t j = 0; j < t.size(); ++j) s += alpha[j] * indicator(t[j], k, mode);
  return s;
}

double utility(std::span<const double> t, std::span<const double> d, const rules::OrderBounds& b,
               const OutcomeConfig& cfg) {
  return delta_x(t, d, cfg.k, cfg.mode) - cfg.beta1 * bound_loss(t, b, cfg.mode) -
         cfg.beta2 * cost(t, cfg.alpha, cfg.k, cfg.mode);
}

Metrics test_metrics(std::span<const double> t, const rules::OrderBounds& b, std::span<const double> d,
                     std::span<const double> alpha) {
  Metrics m;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] != 0.0 && t[j] != 1.0) throw DataError("test_metrics: actions must be binary");
    if (t[j] < 0.5 && b.t_min[j] == 1) m.l_low += 1;
    if (t[j] > 0.5 && b.t_max[j] == 0) m.l_up += 1;
  }
  m.delta_x = delta_x(t, d, 0, Mode::hard);
  m.cost = cost(t, alpha, 0, Mode::hard);
  m.l_b_test = m.l_low + m.l_up;
  return m;
}

BatchOutcome smooth_utility(Var t, const Matrix& d, const Matrix& t_min, const Matrix& eq_mask,
                            const OutcomeConfig& cfg) {
  using namespace numeric;
  Tape& tape = *t.tape;
  Var ind = ops::sigmoid(ops::scale(ops::add_scalar(t, -0.5), cfg.k));
  BatchOutcome o;
  o.delta_x = ops::row_sum(ops::mul(ind, tape.constant(d)));
  o.bound_loss = ops::row_sum(ops::mul(tape.constant(eq_mask), ops::smooth_abs(ops::sub(t, tape.constant(t_min)))));
  o.cost = ops::row_sum(ops::mul(ind, tape.constant(Matrix(1, cfg.alpha.size(), cfg.alpha))));
  o.utility = ops::sub(ops::sub(o.delta_x, ops::scale(o.bound_loss, cfg.beta1)), ops::scale(o.cost, cfg.beta2));
  return o;
}

}  // namespace labpolicy::outcome
