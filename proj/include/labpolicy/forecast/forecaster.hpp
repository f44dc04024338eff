#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/core/window.hpp"
#include "labpolicy/numeric/params.hpp"

namespace labpolicy::forecast {

using numeric::Matrix;

enum class ForecastKind { carry_forward, patch_mlp };

struct ForecastConfig {
  ForecastKind kind = ForecastKind::patch_mlp;
  std::size_t patch_len = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden = 128;
  std::vector<double> lr_grid = {5e-3, 1e-3, 5e-4, 1e-4};
  std::size_t max_epochs = 30;
  std::size_t patience = 4;
  std::size_t batch_size = 64;
  // Score only truly observed post cells instead of the imputed matrix.
  bool masked_loss = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ForecastModel {
  ForecastKind kind = ForecastKind::carry_forward;
  std::size_t d = 0;
  std::size_t patch_len = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden = 128;
  numeric::ParamSet params;
  // training metadata
  std::size_t epochs = 0;
  double val_mse = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;

  static ForecastModel carry_forward(std::size_t d);
  static ForecastModel init_patch_mlp(std::size_t d, const ForecastConfig& cfg, std::uint64_t seed);

  // x_prev is 48×d standardized; returns 24×d.
  Matrix predict(const Matrix& x_prev) const;
  std::vector<Matrix> predict_many(const std::vector<const Matrix*>& x_prev) const;

  nlohmann::json to_json() const;
  static ForecastModel from_json(const nlohmann::json& j);
};

// patch_mlp forward on the tape: n×(d·24), row i holds stay i's forecast in
// (feature, hour) order.
numeric::Var forecast_forward(numeric::Tape& tape, const numeric::BoundParams& params, const ForecastModel& model,
                              const std::vector<const Matrix*>& batch);

// Mean squared error over cells, or over cells with mask = 1. Throws on an
// all-zero mask or shape mismatch.
double mse(const Matrix& pred, const Matrix& truth, const Matrix* mask = nullptr);

struct ForecastSample {
  const Matrix* x_prev;
  const Matrix* x_post;
  const Matrix* post_mask;
};

// Mean over samples of the per-cell loss used for training.
double dataset_mse(const ForecastModel& model, const std::vector<ForecastSample>& data, bool masked);

struct ForecastEpochLog {
  double lr;
  std::size_t epoch;
  double train_mse;  // whole training set, end of epoch
  double val_mse;
};

// Early stopping on validation MSE per learning rate; returns the best
// snapshot across the grid. Throws DataError if no sample has a future.
ForecastModel train_forecaster(const std::vector<ForecastSample>& train, const std::vector<ForecastSample>& val,
                               std::size_t d, const ForecastConfig& cfg, std::vector<ForecastEpochLog>* log = nullptr);

// Samples for every window that has an observed future.
std::vector<ForecastSample> forecast_samples(const std::vector<const core::StayWindow*>& windows);

}  // namespace labpolicy::forecast
