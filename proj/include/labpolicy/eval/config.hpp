#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/forecast/forecaster.hpp"
#include "labpolicy/gps/flow.hpp"
#include "labpolicy/outcome/outcome.hpp"
#include "labpolicy/policy/policy.hpp"
#include "labpolicy/synth/generator.hpp"

namespace labpolicy::eval {

struct RulesOptions {
  std::optional<std::filesystem::path> path;  // default: the shipped rule file
  // Also fire rules on the predicted next 24h (labs and vitals only).
  bool include_predicted_future = false;
  // Off: no guideline bounds (t_min = 0, t_max = 1 for every stay).
  bool enabled = true;
};

enum class CostMode { uniform, real };

struct OutcomeOptions {
  CostMode cost_mode = CostMode::uniform;
  double sharpness = 50.0;
  bool panel_average = true;

  outcome::OutcomeConfig config(std::size_t k, double beta1, double beta2, outcome::Mode mode) const;
};

struct EvalOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  // Score ΔX against the true future instead of the forecast.
  bool oracle_future = false;
  double beta1 = 1.0;
  double beta2 = 1.0;
  std::vector<double> random_p = {0.5, 0.75};
  // Policy and GPS contexts with the forecast zeroed out.
  bool no_future = false;
  std::size_t plot_stays = 3;
};

struct RunConfig {
  synth::GenConfig cohort;
  RulesOptions rules;
  forecast::ForecastConfig forecaster;
  gps::GpsConfig gps;
  policy::PolicyConfig policy;
  OutcomeOptions outcome;
  EvalOptions eval;

  void validate() const;
  nlohmann::json to_json() const;
  // Per-seed copy with every component seeded from `seed`.
  RunConfig for_seed(std::uint64_t seed) const;
};

// Throws ConfigError with the offending key on unknown keys or wrong types.
RunConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace labpolicy::eval
