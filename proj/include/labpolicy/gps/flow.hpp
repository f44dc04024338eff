#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "labpolicy/numeric/params.hpp"

namespace labpolicy::gps {

using numeric::Matrix;
using numeric::Var;

struct GpsConfig {
  std::size_t layers = 3;
  std::size_t bins = 8;
  double bound = 4.0;  // splines act on [-bound, bound], identity outside
  std::vector<std::size_t> context_hidden = {50, 50, 50};
  std::size_t made_hidden = 64;
  double dequant_sd = 0.1;
  std::vector<double> lr_grid = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
  std::size_t batch_size = 512;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  double quantile = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json arch_json() const;
};

// Conditional density of K-dim order vectors given a flattened context.
// Each layer is an autoregressive rational-quadratic spline whose parameters
// come from a masked network over the earlier dims plus a context embedding;
// dims are reversed between layers.
struct GpsModel {
  std::size_t k = 0;
  std::size_t context_dim = 0;
  GpsConfig arch;
  numeric::ParamSet params;
  std::optional<double> threshold;  // ε̄, on the density scale
  // training metadata
  std::size_t epochs = 0;
  double val_nll = 0.0;
  double lr = 0.0;

  static GpsModel init(std::size_t k, std::size_t context_dim, const GpsConfig& cfg, std::uint64_t seed);
  // Zero the output layers so every spline is the identity.
  void make_identity();

  std::size_t embed_dim() const { return arch.context_hidden.back(); }
  // Context embedding (n×E) for contexts n×context_dim.
  Matrix embed(const Matrix& contexts) const;

  // t → z; log_det = log|det ∂z/∂t| per row.
  std::pair<Matrix, std::vector<double>> flow_inverse(const Matrix& t, const Matrix& embedding) const;
  // z → t; log_det = log|det ∂t/∂z| per row.
  std::pair<Matrix, std::vector<double>> flow_forward(const Matrix& z, const Matrix& embedding) const;

  std::vector<double> log_density(const Matrix& t, const Matrix& contexts) const;
  std::vector<double> log_density_embedded(const Matrix& t, const Matrix& embedding) const;

  nlohmann::json to_json() const;
  static GpsModel from_json(const nlohmann::json& j);
};

// Tape versions; t may depend on other parameters (the policy).
Var embed_var(const numeric::BoundParams& p, const GpsModel& m, Var contexts);
// n×1 log densities.
Var log_density_var(const numeric::BoundParams& p, const GpsModel& m, Var t, Var embedding);

struct GpsEpochLog {
  double lr;
  std::size_t epoch;
  double train_nll;
  double val_nll;
};

// Orders are n×K binary, contexts n×context_dim. Early stopping on the
// validation NLL of a fixed dequantized copy; best snapshot over the lr grid.
GpsModel train_gps(const Matrix& train_t, const Matrix& train_ctx, const Matrix& val_t, const Matrix& val_ctx,
                   const GpsConfig& cfg, std::vector<GpsEpochLog>* log = nullptr);

// Mean negative log density of the given rows.
double mean_nll(const GpsModel& m, const Matrix& t, const Matrix& contexts);

// Nearest-rank quantile: the ⌈q·n⌉-th smallest value (at least the first).
double nearest_rank(std::vector<double> values, double q);

// ε̄ = nearest-rank q-quantile of exp(log density) over the given pairs.
double reliability_threshold(const GpsModel& m, const Matrix& t, const Matrix& contexts, double q = 0.05);

}  // namespace labpolicy::gps
