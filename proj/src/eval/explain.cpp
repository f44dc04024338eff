#include "labpolicy/eval/explain.hpp"

#include <algorithm>

#include "labpolicy/error.hpp"

namespace labpolicy::eval {

numeric::Matrix policy_context(const core::StayWindow& w, const numeric::Matrix& forecast, bool no_future) {
  if (!no_future) return core::flatten_context(w.x_prev, forecast);
  return core::flatten_context(w.x_prev, numeric::Matrix(forecast.rows, forecast.cols));
}

namespace {

outcome::FeatureSummary to_raw(const outcome::FeatureSummary& s, const core::FeatureStats& st, std::size_t f) {
  return {st.unstandardize(f, s.mean), st.unstandardize(f, s.min), st.unstandardize(f, s.max)};
}

nlohmann::json summary_json(const outcome::FeatureSummary& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

}  // namespace

Explanation explain(const policy::PolicyModel& policy, const core::PatientStay& stay,
                    const forecast::ForecastModel& forecaster, const rules::RuleSet& rules,
                    const core::FeatureStats& stats, const core::FeatureCatalog& catalog, bool no_future) {
  const auto w = core::make_window(stay, stats);
  const auto pred = forecaster.predict(w.x_prev);
  const auto probs = policy.act(policy_context(w, pred, no_future));
  if (probs.cols != catalog.k()) throw DataError("explain: policy output does not match the test catalog");

  Explanation e;
  e.stay_id = stay.stay_id;
  e.tests = catalog.tests();
  e.probabilities.assign(probs.data.begin(), probs.data.end());
  for (double p : e.probabilities) e.order.push_back(p > 0.5 ? 1 : 0);

  for (const auto& rule : rules.rules) {
    const auto res = rules::eval_rule(rule, w.raw_prev);
    if (!res.fired) continue;
    FiredRule fr;
    fr.name = rule.name;
    for (auto t : rule.tests) fr.tests.push_back(catalog.tests()[t]);
    for (std::size_t c = 0; c < rule.clauses.size(); ++c)
      fr.clauses.push_back({rule.clauses[c].text(), res.clauses[c].satisfied, res.clauses[c].value});
    e.fired_rules.push_back(std::move(fr));
  }

  for (std::size_t j = 0; j < catalog.k(); ++j) {
    if (!e.order[j]) continue;
    TestExplanation te;
    te.test = catalog.tests()[j];
    te.probability = e.probabilities[j];
    for (const auto& fr : e.fired_rules)
      if (std::find(fr.tests.begin(), fr.tests.end(), te.test) != fr.tests.end()) te.cited_rules.push_back(fr.name);
    for (auto f : catalog.panel_features(j)) {
      FeatureExplanation fe;
      fe.feature = catalog.feature(f).name;
      fe.prev = to_raw(outcome::summarize_prev(w.x_prev, w.obs_mask_prev, f), stats, f);
      fe.predicted = to_raw(outcome::summarize_post(pred, f), stats, f);
      for (std::size_t h = 0; h < pred.rows; ++h) fe.predicted_series.push_back(stats.unstandardize(f, pred(h, f)));
      te.features.push_back(std::move(fe));
    }
    e.ordered.push_back(std::move(te));
  }
  return e;
}

nlohmann::json Explanation::to_json() const {
  nlohmann::json j;
  j["stay_id"] = stay_id;
  j["tests"] = tests;
  j["probabilities"] = probabilities;
  j["order"] = order;
  j["fired_rules"] = nlohmann::json::array();
  for (const auto& r : fired_rules) {
    nlohmann::json cl = nlohmann::json::array();
    for (const auto& c : r.clauses)
      cl.push_back({{"clause", c.text},
                    {"satisfied", c.satisfied},
                    {"value", c.value ? nlohmann::json(*c.value) : nlohmann::json(nullptr)}});
    j["fired_rules"].push_back({{"rule", r.name}, {"tests", r.tests}, {"clauses", cl}});
  }
  j["ordered_tests"] = nlohmann::json::array();
  for (const auto& t : ordered) {
    nlohmann::json fs = nlohmann::json::array();
    for (const auto& f : t.features)
      fs.push_back({{"feature", f.feature},
                    {"prev", summary_json(f.prev)},
                    {"predicted", summary_json(f.predicted)},
                    {"predicted_series", f.predicted_series}});
    j["ordered_tests"].push_back(
        {{"test", t.test}, {"probability", t.probability}, {"cited_rules", t.cited_rules}, {"panel", fs}});
  }
  return j;
}

}  // namespace labpolicy::eval
