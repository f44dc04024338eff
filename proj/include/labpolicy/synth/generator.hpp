#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "labpolicy/core/stay.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::synth {

struct GenConfig {
  std::size_t n_stays = 5000;
  std::size_t d_features = 40;  // must match the catalog
  // Hourly AR(1) severity shared by all organ systems.
  double rho = 0.97;
  double sigma_s = 0.2;
  // Weight of shared severity in each organ's latent state.
  double severity_loading = 0.5;
  // Expected draws per 24h of each lab panel.
  double lab_rate = 2.0;
  // Multiplier on every treatment's daily trigger odds.
  double treatment_rate = 1.0;
  // Chance per organ per stay of an acute episode around the decision hour.
  double episode_prob = 0.3;
  // Logging policy: extra test ordered with probability
  // sigmoid(logit(q) + gamma * informativeness); guideline test dropped w.p. r.
  double q = 0.85;
  double r = 0.1;
  double gamma = 2.0;
  std::uint64_t seed = 1;

  void validate() const;
};

std::vector<core::PatientStay> generate(const GenConfig& config, const core::FeatureCatalog& catalog,
                                        const rules::RuleSet& rules);

struct CalibrationStats {
  double guideline_to_observed_ratio = 0.0;
  double miss_rate = 0.0;
  double mean_observed_orders = 0.0;
  double mean_guideline_orders = 0.0;
  std::map<std::string, std::size_t> rule_fire_counts;
  std::size_t n_stays = 0;

  nlohmann::json to_json() const;
};

// Throws DataError when either denominator is zero.
CalibrationStats calibration_report(const std::vector<core::PatientStay>& stays,
                                    const std::vector<rules::OrderBounds>& bounds);

}  // namespace labpolicy::synth
