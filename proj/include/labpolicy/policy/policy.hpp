#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/gps/flow.hpp"
#include "labpolicy/numeric/mlp.hpp"
#include "labpolicy/numeric/optim.hpp"
#include "labpolicy/outcome/outcome.hpp"

namespace labpolicy::policy {

using numeric::Matrix;
using numeric::Var;

struct PolicyConfig {
  // Tuned for ΔX measured in standardized units (about 0.9 per ordered test).
  double beta1 = 2.0;
  double beta2 = 4.0;
  // Multipliers start inactive; raw densities reach 1e4, so a positive start
  // turns the first epoch into pure density ascent.
  double lambda_init = 0.0;
  double eta_lambda = 0.01;
  double lr = 1e-3;
  std::vector<std::size_t> hidden = {256, 256};
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 7;
  std::size_t restarts = 5;
  bool use_gps = true;
  std::optional<double> eps_override;
  // Constrain log f̂ against log ε̄ instead of the densities themselves.
  bool log_constraint = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// Everything the learner needs per stay, row-aligned.
struct PolicyData {
  Matrix contexts;       // n×C flattened [x_prev; x̂_post]
  Matrix d;              // n×K panel changes against the future used for scoring
  Matrix t_min, t_max;   // n×K
  Matrix t_star;         // n×K logged orders
  Matrix gps_embedding;  // n×E, empty when no GPS is used

  std::size_t size() const { return contexts.rows; }
  std::size_t k() const { return d.cols; }
  // Rows subset, keeping every field aligned.
  PolicyData subset(std::span<const std::size_t> rows) const;
};

struct PolicyModel {
  numeric::MlpSpec spec;
  numeric::ParamSet params;
  // metadata
  std::size_t restart = 0;
  std::size_t epochs = 0;
  double val_objective = 0.0;
  std::uint64_t seed = 0;

  static PolicyModel init(std::size_t context_dim, std::size_t k, std::span<const std::size_t> hidden,
                          std::uint64_t seed);

  // n×K order probabilities in (0,1).
  Matrix act(const Matrix& contexts) const;

  nlohmann::json to_json() const;
  static PolicyModel from_json(const nlohmann::json& j);
};

// Orders a test when its probability is strictly above 0.5.
Matrix binarize(const Matrix& probs);

Var policy_forward(const numeric::BoundParams& p, const PolicyModel& m, Var contexts);

// L = −mean_i { g_i + λ_i (f̂_i − ε̄) }; both g and f̂ are n×1.
Var lagrangian(Var g, Var fhat, std::span<const double> lambda, double eps);
Var lagrangian(Var g);

// Ascent on the batch's multipliers with ∂L/∂λ_i = −(f̂_i − ε̄)/n, then clamp at 0.
void ascend_lambda(std::vector<double>& lambda, std::span<const std::size_t> batch, std::span<const double> fhat,
                   double eps, double eta);

struct EpochStats {
  double loss = 0.0;
  double mean_lambda = 0.0;
  double violation_fraction = 0.0;  // training samples with f̂ < ε̄ this epoch
};

struct GdaContext {
  const gps::GpsModel* gps = nullptr;  // null: unconstrained
  double eps = 0.0;
  outcome::OutcomeConfig outcome;      // smooth, with the training betas
};

// One shuffled pass of simultaneous descent on θ and ascent on λ.
EpochStats gda_epoch(PolicyModel& model, numeric::AdamState& adam, std::vector<double>& lambda,
                     const PolicyData& train, const GdaContext& ctx, const PolicyConfig& cfg, numeric::Rng& rng);

// Mean over stays of hard g(t_i) · 1{f̂(t_i) > ε̄} for binary actions; the
// indicator is 1 everywhere without a GPS.
double selection_score(const Matrix& actions, const PolicyData& data, const gps::GpsModel* gps, double eps,
                       const outcome::OutcomeConfig& outcome);

// argmax with ties to the lowest index; throws on an empty list.
std::size_t select_best(std::span<const double> scores);
PolicyModel select_model(const std::vector<PolicyModel>& candidates, const PolicyData& val, const gps::GpsModel* gps,
                         double eps, const outcome::OutcomeConfig& outcome);

struct PolicyEpochLog {
  std::size_t restart;
  std::size_t epoch;
  double loss;
  double val_objective;
  double mean_lambda;
  double violation_fraction;
};

// Threshold used for training: the override if set, else the model's ε̄.
double constraint_threshold(const PolicyConfig& cfg, const gps::GpsModel* gps);

// M restarts, early stopping on the validation selection score, then
// select_model over the restart winners. `outcome` supplies α and sharpness.
PolicyModel train_policy(const PolicyData& train, const PolicyData& val, const gps::GpsModel* gps,
                         const PolicyConfig& cfg, const outcome::OutcomeConfig& outcome,
                         std::vector<PolicyEpochLog>* log = nullptr);

enum class BaselineKind { random, lower, upper, physician };

// random(p) draws i.i.d. Bernoulli(p) per test and stay from `seed`.
Matrix baseline_orders(BaselineKind kind, const PolicyData& data, double p = 0.5, std::uint64_t seed = 0);

}  // namespace labpolicy::policy
