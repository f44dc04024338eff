#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labpolicy/core/catalog.hpp"
#include "labpolicy/core/window.hpp"

namespace labpolicy::rules {

enum class Metric { last, min, max, delta, drop, rise, pctdrop, pctrise, sum, event, newevent };
enum class Cmp { lt, gt, le, ge };

std::string_view to_string(Metric m);
std::string_view to_string(Cmp c);

struct Clause {
  Metric metric = Metric::last;
  std::size_t feature = 0;
  std::string feature_name;
  double window_hours = 48.0;
  double prior_window_hours = 0.0;  // NEWEVENT only
  // Required for value metrics. For EVENT/NEWEVENT it replaces the default
  // "nonzero value" test on each observation.
  std::optional<Cmp> cmp;
  double threshold = 0.0;

  std::string text() const;
};

struct Rule {
  std::string name;
  std::vector<Clause> clauses;
  std::vector<std::size_t> tests;
  std::size_t line = 0;
};

struct RuleSet {
  std::vector<Rule> rules;
};

// Errors are ConfigError with "line L, column C" in the message.
RuleSet parse_rules(std::string_view text, const core::FeatureCatalog& catalog);
RuleSet load_rules(const std::filesystem::path& path, const core::FeatureCatalog& catalog);

// The shipped ICU rule file, compiled into the library.
std::string_view default_rules_text();
const RuleSet& default_ruleset();

struct ClauseResult {
  bool satisfied = false;
  std::optional<double> value;  // metric value; empty when the window had no data
};

struct RuleResult {
  bool fired = false;
  std::vector<ClauseResult> clauses;
};

ClauseResult eval_clause(const Clause& clause, const core::RawWindow& window);
RuleResult eval_rule(const Rule& rule, const core::RawWindow& window);
inline RuleResult eval_rule(const Rule& rule, const core::StayWindow& window) {
  return eval_rule(rule, window.raw_prev);
}

struct OrderBounds {
  std::vector<std::uint8_t> t_min;
  std::vector<std::uint8_t> t_max;
  std::vector<std::string> fired_rules;
};

// Union of the tests ordered by every fired rule.
std::vector<std::uint8_t> guideline_orders(const core::RawWindow& window, const RuleSet& rules, std::size_t k,
                                           std::vector<std::string>* fired = nullptr);
OrderBounds compute_bounds(const core::RawWindow& window, const RuleSet& rules,
                           std::span<const std::uint8_t> observed_order);

std::string bounds_to_json_line(const std::string& stay_id, const OrderBounds& b);
// Returns (stay_id, bounds).
std::pair<std::string, OrderBounds> bounds_from_json_line(const std::string& line);

}  // namespace labpolicy::rules
