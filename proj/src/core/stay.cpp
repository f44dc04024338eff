#include "labpolicy/core/stay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "labpolicy/error.hpp"

namespace labpolicy::core {

using nlohmann::json;

void PatientStay::canonicalize() {
  std::stable_sort(observations.begin(), observations.end(),
                   [](const Observation& a, const Observation& b) { return a.hour < b.hour; });
}

PatientStay stay_from_json_line(const std::string& line, const FeatureCatalog& catalog) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
  PatientStay s;
  try {
    s.stay_id = j.at("stay_id").get<std::string>();
    s.anchor_hour = j.at("anchor_hour").get<double>();
    for (const auto& o : j.at("observations")) {
      if (!o.is_array() || o.size() != 3) throw DataError("observation must be [hour, feature, value]");
      const auto name = o[1].get<std::string>();
      const auto id = catalog.feature_id(name);
      if (!id) throw DataError("unknown feature '" + name + "'");
      const double hour = o[0].get<double>();
      if (!(hour >= 0) || !std::isfinite(hour)) throw DataError("observation hour must be a non-negative number");
      const double value = o[2].get<double>();
      if (!std::isfinite(value)) throw DataError("non-finite value for feature '" + name + "'");
      s.observations.push_back({hour, *id, value});
    }
    for (const auto& b : j.at("observed_order")) {
      const int v = b.get<int>();
      if (v != 0 && v != 1) throw DataError("observed_order entries must be 0 or 1");
      s.observed_order.push_back(static_cast<std::uint8_t>(v));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed stay: ") + e.what());
  }
  if (s.observed_order.size() != catalog.k())
    throw DataError("observed_order has length " + std::to_string(s.observed_order.size()) + ", expected " +
                    std::to_string(catalog.k()));
  s.canonicalize();
  return s;
}

std::vector<PatientStay> read_cohort(std::istream& in, const FeatureCatalog& catalog) {
  std::vector<PatientStay> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(stay_from_json_line(line, catalog));
    } catch (const DataError& e) {
      throw DataError("cohort line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PatientStay> load_cohort(const std::filesystem::path& path, const FeatureCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file " + path.string());
  return read_cohort(in, catalog);
}

std::string stay_to_json_line(const PatientStay& stay, const FeatureCatalog& catalog) {
  json obs = json::array();
  for (const auto& o : stay.observations) obs.push_back(json::array({o.hour, catalog.feature(o.feature).name, o.value}));
  json order = json::array();
  for (auto b : stay.observed_order) order.push_back(static_cast<int>(b));
  json j = json::object();
  j["stay_id"] = stay.stay_id;
  j["anchor_hour"] = stay.anchor_hour;
  j["observations"] = std::move(obs);
  j["observed_order"] = std::move(order);
  return j.dump();
}

void write_cohort(std::ostream& out, const std::vector<PatientStay>& stays, const FeatureCatalog& catalog) {
  for (const auto& s : stays) out << stay_to_json_line(s, catalog) << '\n';
}

void save_cohort(const std::filesystem::path& path, const std::vector<PatientStay>& stays,
                 const FeatureCatalog& catalog) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cohort file " + path.string());
  write_cohort(out, stays, catalog);
}

void save_catalog(const std::filesystem::path& path, const FeatureCatalog& catalog) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write catalog file " + path.string());
  out << catalog.to_json().dump(2) << '\n';
}

FeatureCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed catalog " + path.string() + ": " + e.what());
  }
  return FeatureCatalog::from_json(j);
}

}  // namespace labpolicy::core
