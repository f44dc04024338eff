#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "labpolicy/core/stay.hpp"
#include "labpolicy/numeric/matrix.hpp"

namespace labpolicy::core {

using numeric::Matrix;

inline constexpr std::size_t kPrevHours = 48;
inline constexpr std::size_t kPostHours = 24;

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> sd;

  static constexpr double kStdFloor = 1e-6;

  double standardize(std::size_t f, double v) const { return (v - mean[f]) / sd[f]; }
  double unstandardize(std::size_t f, double z) const { return z * sd[f] + mean[f]; }

  nlohmann::json to_json() const;
  static FeatureStats from_json(const nlohmann::json& j);
};

// Raw observations in [anchor − 48, anchor), grouped by feature in hour order.
struct RawWindow {
  double anchor = 0.0;
  std::vector<std::vector<std::pair<double, double>>> by_feature;  // (hour, value)

  static RawWindow from_stay(const PatientStay& stay, std::size_t d);
  std::size_t count() const;
};

struct StayWindow {
  Matrix x_prev;         // 48×d standardized, imputed
  Matrix obs_mask_prev;  // 48×d, 1 where the cell had an observation
  std::optional<Matrix> x_post_true;  // 24×d
  std::optional<Matrix> obs_mask_post;
  RawWindow raw_prev;
};

// Throws DataError if the stay has nothing in [anchor − 48, anchor).
StayWindow make_window(const PatientStay& stay, const FeatureStats& stats);

// [x_prev; x_post] flattened hour-major into one 1×(72·d) row.
Matrix flatten_context(const Matrix& x_prev, const Matrix& x_post);

// Mean/std (population) over every raw observation in the given stays.
FeatureStats fit_stats(const std::vector<const PatientStay*>& train, std::size_t d);
FeatureStats fit_stats(const std::vector<PatientStay>& train, std::size_t d);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle; val and test sizes are floored, the remainder goes to train.
SplitIndices split(std::size_t n, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed);

}  // namespace labpolicy::core
