#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "labpolicy/core/catalog.hpp"
#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::outcome {

using numeric::Matrix;
using numeric::Var;

enum class Mode { smooth, hard };

// Per-test prices in USD, in catalog test order.
inline constexpr double kRealCostsUsd[core::kNumTests] = {12, 5, 12.36, 18, 9.1, 10, 18.62, 1.5, 18, 1.5};

struct OutcomeConfig {
  double beta1 = 10.0;
  double beta2 = 10.0;
  std::vector<double> alpha;  // sums to 1
  double k = 50.0;            // sigmoid sharpness of the smooth indicator
  Mode mode = Mode::smooth;
  // Panel contributions average over the panel's labs (false: sum).
  bool panel_average = true;

  static std::vector<double> uniform_costs(std::size_t k);
  static std::vector<double> real_costs();
  void validate() const;
};

double indicator(double t, double k, Mode mode);
double smooth_abs(double u);

// ΔX building block for one stay: D_j = Δ_avg,j + Δ_range,j of test j's panel
// between the observed previous window and the given 24h future.
struct PanelChange {
  double avg = 0.0;
  double range = 0.0;
  double total() const { return avg + range; }
};

struct FeatureSummary {
  double mean = 0.0, min = 0.0, max = 0.0;
};

// Previous-window summary over observed cells only, falling back to the
// imputed column when the feature was never observed.
FeatureSummary summarize_prev(const Matrix& x_prev, const Matrix& obs_mask_prev, std::size_t feature);
FeatureSummary summarize_post(const Matrix& x_post, std::size_t feature);

std::vector<PanelChange> panel_changes(const Matrix& x_prev, const Matrix& obs_mask_prev, const Matrix& x_post,
                                       const core::FeatureCatalog& catalog, bool panel_average = true);
std::vector<double> panel_totals(const std::vector<PanelChange>& changes);

double delta_x(std::span<const double> t, std::span<const double> d, double k, Mode mode);
double bound_loss(std::span<const double> t, const rules::OrderBounds& b, Mode mode);
double cost(std::span<const double> t, std::span<const double> alpha, double k, Mode mode);
double utility(std::span<const double> t, std::span<const double> d, const rules::OrderBounds& b,
               const OutcomeConfig& cfg);

struct Metrics {
  double delta_x = 0.0;
  double cost = 0.0;
  double l_b_test = 0.0;
  double l_low = 0.0;
  double l_up = 0.0;
};

// Discrete evaluation metrics; throws DataError on non-binary t.
Metrics test_metrics(std::span<const double> t_binary, const rules::OrderBounds& b, std::span<const double> d,
                     std::span<const double> alpha);

// Batched smooth utility on the tape. t is n×K; d, t_min and eq_mask are n×K
// constants (eq_mask_ij = 1 where t_min = t_max); returns n×1 utilities.
struct BatchOutcome {
  Var delta_x, bound_loss, cost, utility;
};
BatchOutcome smooth_utility(Var t, const Matrix& d, const Matrix& t_min, const Matrix& eq_mask,
                            const OutcomeConfig& cfg);

}  // namespace labpolicy::outcome
