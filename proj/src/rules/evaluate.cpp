#include <algorithm>
#include <limits>

#include <json.hpp>

#include "labpolicy/error.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::rules {

namespace {

bool compare(double v, Cmp c, double thr) {
  switch (c) {
    case Cmp::lt:
      return v < thr;
    case Cmp::gt:
      return v > thr;
    case Cmp::le:
      return v <= thr;
    case Cmp::ge:
      return v >= thr;
  }
  return false;
}

// Any observation in [lo, hi) counting as an event.
bool any_event(const std::vector<std::pair<double, double>>& series, double lo, double hi, const Clause& c) {
  for (const auto& [h, v] : series)
    if (h >= lo && h < hi && (c.cmp ? compare(v, *c.cmp, c.threshold) : v != 0.0)) return true;
  return false;
}

}  // namespace

ClauseResult eval_clause(const Clause& c, const core::RawWindow& w) {
  const auto& series = w.by_feature.at(c.feature);
  const double hi = w.anchor;
  const double lo = w.anchor - c.window_hours;
  ClauseResult r;

  if (c.metric == Metric::event || c.metric == Metric::newevent) {
    bool hit = any_event(series, lo, hi, c);
    if (hit && c.metric == Metric::newevent) hit = !any_event(series, lo - c.prior_window_hours, lo, c);
    r.value = hit ? 1.0 : 0.0;
    r.satisfied = hit;
    return r;
  }

  double mn = std::numeric_limits<double>::infinity(), mx = -mn, last = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (const auto& [h, v] : series) {
    if (h < lo || h >= hi) continue;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    last = v;
    sum += v;
    ++n;
  }
  if (n == 0) return r;

  double value = 0.0;
  switch (c.metric) {
    case Metric::last:
      value = last;
      break;
    case Metric::min:
      value = mn;
      break;
    case Metric::max:
      value = mx;
      break;
    case Metric::delta:
      value = mx - mn;
      break;
    case Metric::drop:
      value = mx - last;
      break;
    case Metric::rise:
      value = last - mn;
      break;
    case Metric::pctdrop:
      if (!(mx > 0)) return r;  // relative change undefined
      value = 100.0 * (mx - last) / mx;
      break;
    case Metric::pctrise:
      if (!(mn > 0)) return r;
      value = 100.0 * (last - mn) / mn;
      break;
    case Metric::sum:
      value = sum;
      break;
    case Metric::event:
    case Metric::newevent:
      break;
  }
  r.value = value;
  r.satisfied = c.cmp && compare(value, *c.cmp, c.threshold);
  return r;
}

RuleResult eval_rule(const Rule& rule, const core::RawWindow& window) {
  RuleResult res;
  res.fired = true;
  for (const auto& c : rule.clauses) {
    res.clauses.push_back(eval_clause(c, window));
    res.fired = res.fired && res.clauses.back().satisfied;
  }
  return res;
}

std::vector<std::uint8_t> guideline_orders(const core::RawWindow& window, const RuleSet& rules, std::size_t k,
                                           std::vector<std::string>* fired) {
  std::vector<std::uint8_t> t(k, 0);
  for (const auto& rule : rules.rules) {
    if (!eval_rule(rule, window).fired) continue;
    for (auto j : rule.tests) t.at(j) = 1;
    if (fired) fired->push_back(rule.name);
  }
  return t;
}

OrderBounds compute_bounds(const core::RawWindow& window, const RuleSet& rules,
                           std::span<const std::uint8_t> observed_order) {
  OrderBounds b;
  b.t_min = guideline_orders(window, rules, observed_order.size(), &b.fired_rules);
  b.t_max.resize(observed_order.size());
  for (std::size_t j = 0; j < observed_order.size(); ++j) b.t_max[j] = (b.t_min[j] || observed_order[j]) ? 1 : 0;
  return b;
}

std::string bounds_to_json_line(const std::string& stay_id, const OrderBounds& b) {
  nlohmann::json j = nlohmann::json::object();
  j["stay_id"] = stay_id;
  j["t_min"] = b.t_min;
  j["t_max"] = b.t_max;
  j["fired_rules"] = b.fired_rules;
  return j.dump();
}

std::pair<std::string, OrderBounds> bounds_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    OrderBounds b;
    b.t_min = j.at("t_min").get<std::vector<std::uint8_t>>();
    b.t_max = j.at("t_max").get<std::vector<std::uint8_t>>();
    b.fired_rules = j.at("fired_rules").get<std::vector<std::string>>();
    if (b.t_min.size() != b.t_max.size()) throw DataError("bounds: t_min/t_max length mismatch");
    return {j.at("stay_id").get<std::string>(), std::move(b)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bounds line: ") + e.what());
  }
}

}  // namespace labpolicy::rules
