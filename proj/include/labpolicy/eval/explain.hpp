#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/core/catalog.hpp"
#include "labpolicy/core/stay.hpp"
#include "labpolicy/core/window.hpp"
#include "labpolicy/forecast/forecaster.hpp"
#include "labpolicy/outcome/outcome.hpp"
#include "labpolicy/policy/policy.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::eval {

struct ClauseCitation {
  std::string text;
  bool satisfied = false;
  std::optional<double> value;
};

struct FiredRule {
  std::string name;
  std::vector<std::string> tests;
  std::vector<ClauseCitation> clauses;
};

// Raw units, over the 48h the policy saw and the 24h it was shown.
struct FeatureExplanation {
  std::string feature;
  outcome::FeatureSummary prev;
  outcome::FeatureSummary predicted;
  std::vector<double> predicted_series;  // 24 hourly values
};

struct TestExplanation {
  std::string test;
  double probability = 0.0;
  std::vector<std::string> cited_rules;
  std::vector<FeatureExplanation> features;
};

struct Explanation {
  std::string stay_id;
  std::vector<std::string> tests;
  std::vector<double> probabilities;
  std::vector<int> order;
  std::vector<FiredRule> fired_rules;
  std::vector<TestExplanation> ordered;  // one entry per recommended test

  nlohmann::json to_json() const;
};

// Policy input for one window: [x_prev; forecast], with the forecast zeroed
// when `no_future` is set.
numeric::Matrix policy_context(const core::StayWindow& w, const numeric::Matrix& forecast, bool no_future);

Explanation explain(const policy::PolicyModel& policy, const core::PatientStay& stay,
                    const forecast::ForecastModel& forecaster, const rules::RuleSet& rules,
                    const core::FeatureStats& stats, const core::FeatureCatalog& catalog, bool no_future = false);

}  // namespace labpolicy::eval
