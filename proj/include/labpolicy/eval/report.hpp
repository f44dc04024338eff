#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/gps/flow.hpp"
#include "labpolicy/outcome/outcome.hpp"
#include "labpolicy/policy/policy.hpp"

namespace labpolicy::eval {

struct ReportRow {
  std::string name;
  std::uint64_t seed = 0;
  double delta_x = 0.0;
  double cost = 0.0;
  double l_b_test = 0.0;
  double l_low = 0.0;
  double l_up = 0.0;
  double utility = 0.0;  // mean hard g at the evaluation betas
  std::optional<double> mean_gps;
  std::optional<double> frac_below;  // share of stays with f̂ < ε̄
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for a single seed
};

struct AggregateRow {
  std::string name;
  std::size_t n = 0;
  Stat delta_x, cost, l_b_test, l_low, l_up, utility;
  std::optional<Stat> mean_gps, frac_below;
};

struct Report {
  std::vector<std::uint64_t> seeds;
  nlohmann::json config;
  std::vector<ReportRow> rows;  // seed-major, policy order within a seed
  std::vector<AggregateRow> aggregate;

  // Recomputes `aggregate` from `rows`, keeping first-seen name order.
  void aggregate_rows();
  nlohmann::json to_json() const;
  // Same numbers as to_json, one line per row; aggregate lines carry seed "all".
  std::string to_csv() const;
};

// Shortest text that parses back to the same double.
std::string format_number(double v);

struct EvalInputs {
  const policy::PolicyData* test = nullptr;
  const gps::GpsModel* gps = nullptr;  // optional
  double eps = 0.0;
  std::vector<double> alpha;
  double beta1 = 1.0;
  double beta2 = 1.0;
};

// Metrics of one binary action matrix on the test stays.
ReportRow evaluate_actions(const std::string& name, std::uint64_t seed, const policy::Matrix& actions,
                           const EvalInputs& in);

}  // namespace labpolicy::eval
