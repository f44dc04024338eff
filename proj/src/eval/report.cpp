#include "labpolicy/eval/report.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "labpolicy/error.hpp"

namespace labpolicy::eval {

std::string format_number(double v) {
  if (!std::isfinite(v)) throw NumericError("report: non-finite metric");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

// Numbers go through format_number so JSON and CSV print the same digits.
nlohmann::json num(double v) { return nlohmann::json::parse(format_number(v)); }

nlohmann::json stat_json(const Stat& s) { return {{"mean", num(s.mean)}, {"std", num(s.std)}}; }

}  // namespace

void Report::aggregate_rows() {
  aggregate.clear();
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.name)) order.push_back(r.name);
    groups[r.name].push_back(&r);
  }
  for (const auto& name : order) {
    const auto& g = groups[name];
    auto collect = [&](auto field) {
      std::vector<double> v;
      for (const auto* r : g) v.push_back(field(*r));
      return stat_of(v);
    };
    AggregateRow a;
    a.name = name;
    a.n = g.size();
    a.delta_x = collect([](const ReportRow& r) { return r.delta_x; });
    a.cost = collect([](const ReportRow& r) { return r.cost; });
    a.l_b_test = collect([](const ReportRow& r) { return r.l_b_test; });
    a.l_low = collect([](const ReportRow& r) { return r.l_low; });
    a.l_up = collect([](const ReportRow& r) { return r.l_up; });
    a.utility = collect([](const ReportRow& r) { return r.utility; });
    bool all_gps = true;
    for (const auto* r : g) all_gps = all_gps && r->mean_gps && r->frac_below;
    if (all_gps) {
      a.mean_gps = collect([](const ReportRow& r) { return *r.mean_gps; });
      a.frac_below = collect([](const ReportRow& r) { return *r.frac_below; });
    }
    aggregate.push_back(a);
  }
}

nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["config"] = config;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json o = {{"name", r.name},           {"seed", r.seed},         {"delta_x", num(r.delta_x)},
                        {"cost", num(r.cost)},      {"l_b_test", num(r.l_b_test)}, {"l_low", num(r.l_low)},
                        {"l_up", num(r.l_up)},      {"utility", num(r.utility)}};
    o["mean_gps"] = r.mean_gps ? num(*r.mean_gps) : nlohmann::json(nullptr);
    o["frac_below_threshold"] = r.frac_below ? num(*r.frac_below) : nlohmann::json(nullptr);
    j["rows"].push_back(o);
  }
  j["aggregate"] = nlohmann::json::array();
  for (const auto& a : aggregate) {
    nlohmann::json o = {{"name", a.name},
                        {"n_seeds", a.n},
                        {"delta_x", stat_json(a.delta_x)},
                        {"cost", stat_json(a.cost)},
                        {"l_b_test", stat_json(a.l_b_test)},
                        {"l_low", stat_json(a.l_low)},
                        {"l_up", stat_json(a.l_up)},
                        {"utility", stat_json(a.utility)}};
    o["mean_gps"] = a.mean_gps ? stat_json(*a.mean_gps) : nlohmann::json(nullptr);
    o["frac_below_threshold"] = a.frac_below ? stat_json(*a.frac_below) : nlohmann::json(nullptr);
    j["aggregate"].push_back(o);
  }
  return j;
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << "name,seed,stat,delta_x,cost,l_b_test,l_low,l_up,utility,mean_gps,frac_below_threshold\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : rows)
    out << r.name << ',' << r.seed << ",value," << format_number(r.delta_x) << ',' << format_number(r.cost) << ','
        << format_number(r.l_b_test) << ',' << format_number(r.l_low) << ',' << format_number(r.l_up) << ','
        << format_number(r.utility) << ',' << opt(r.mean_gps) << ',' << opt(r.frac_below) << '\n';
  for (const auto& a : aggregate) {
    for (int which = 0; which < 2; ++which) {
      auto pick = [&](const Stat& s) { return format_number(which == 0 ? s.mean : s.std); };
      auto pick_opt = [&](const std::optional<Stat>& s) { return s ? pick(*s) : std::string(); };
      out << a.name << ",all," << (which == 0 ? "mean" : "std") << ',' << pick(a.delta_x) << ',' << pick(a.cost)
          << ',' << pick(a.l_b_test) << ',' << pick(a.l_low) << ',' << pick(a.l_up) << ',' << pick(a.utility) << ','
          << pick_opt(a.mean_gps) << ',' << pick_opt(a.frac_below) << '\n';
    }
  }
  return out.str();
}

ReportRow evaluate_actions(const std::string& name, std::uint64_t seed, const policy::Matrix& actions,
                           const EvalInputs& in) {
  if (!in.test) throw DataError("evaluate: no test split");
  const auto& data = *in.test;
  const std::size_t n = data.size();
  if (n == 0) throw DataError("evaluate: empty test split");
  if (actions.rows != n || actions.cols != data.k()) throw DataError("evaluate: action shape does not match the test split");
  if (data.t_min.rows != n || data.t_max.rows != n) throw DataError("evaluate: missing bounds for test stays");

  outcome::OutcomeConfig oc;
  oc.beta1 = in.beta1;
  oc.beta2 = in.beta2;
  oc.alpha = in.alpha;
  oc.mode = outcome::Mode::hard;
  oc.validate();

  ReportRow row;
  row.name = name;
  row.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    rules::OrderBounds b;
    for (std::size_t j = 0; j < data.k(); ++j) {
      b.t_min.push_back(static_cast<std::uint8_t>(data.t_min(i, j)));
      b.t_max.push_back(static_cast<std::uint8_t>(data.t_max(i, j)));
    }
    const auto m = outcome::test_metrics(actions.row(i), b, data.d.row(i), in.alpha);
    row.delta_x += m.delta_x;
    row.cost += m.cost;
    row.l_b_test += m.l_b_test;
    row.l_low += m.l_low;
    row.l_up += m.l_up;
    row.utility += outcome::utility(actions.row(i), data.d.row(i), b, oc);
  }
  const double dn = static_cast<double>(n);
  row.delta_x /= dn;
  row.cost /= dn;
  row.l_b_test /= dn;
  row.l_low /= dn;
  row.l_up /= dn;
  row.utility /= dn;

  if (in.gps) {
    if (data.gps_embedding.rows != n) throw DataError("evaluate: GPS embeddings are missing");
    auto logd = in.gps->log_density_embedded(actions, data.gps_embedding);
    double s = 0, below = 0;
    for (double l : logd) {
      const double f = std::exp(l);
      s += f;
      below += f < in.eps ? 1.0 : 0.0;
    }
    row.mean_gps = s / dn;
    row.frac_below = below / dn;
  }
  return row;
}

}  // namespace labpolicy::eval
