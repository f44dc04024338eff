#include "labpolicy/core/catalog.hpp"

#include <set>
#include <tuple>

#include "labpolicy/error.hpp"

namespace labpolicy::core {

std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::lab:
      return "lab";
    case FeatureKind::vital:
      return "vital";
    case FeatureKind::treatment:
      return "treatment";
  }
  return "lab";
}

FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "lab") return FeatureKind::lab;
  if (s == "vital") return FeatureKind::vital;
  if (s == "treatment") return FeatureKind::treatment;
  throw DataError("unknown feature kind '" + std::string(s) + "'");
}

FeatureCatalog::FeatureCatalog(std::vector<std::string> tests, std::vector<Feature> features)
    : tests_(std::move(tests)), features_(std::move(features)) {
  if (tests_.size() != kNumTests) throw DataError("catalog must list exactly 10 tests");
  for (std::size_t j = 0; j < kNumTests; ++j)
    if (tests_[j] != kTestNames[j])
      throw DataError("catalog test " + std::to_string(j) + " must be " + std::string(kTestNames[j]) + ", got " +
                      tests_[j]);
  std::set<std::string> names;
  panels_.assign(kNumTests, {});
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const Feature& f = features_[i];
    if (f.id != i) throw DataError("catalog feature ids must be dense 0..d-1 (feature '" + f.name + "')");
    if (!names.insert(f.name).second) throw DataError("duplicate feature name '" + f.name + "'");
    if (f.kind == FeatureKind::lab) {
      if (!f.panel || *f.panel >= kNumTests) throw DataError("lab feature '" + f.name + "' needs a valid panel");
      panels_[*f.panel].push_back(i);
    } else if (f.panel) {
      throw DataError("non-lab feature '" + f.name + "' must not have a panel");
    }
  }
}

const FeatureCatalog& FeatureCatalog::icu_default() {
  static const FeatureCatalog cat = [] {
    using K = FeatureKind;
    // name, kind, panel test (-1 none), unit
    const std::vector<std::tuple<const char*, K, int, const char*>> spec = {
        {"Hemoglobin", K::lab, 0, "g/dL"},
        {"WBC", K::lab, 0, "10^3/uL"},
        {"Platelets", K::lab, 0, "10^3/uL"},
        {"Sodium", K::lab, 1, "mmol/L"},
        {"Potassium", K::lab, 1, "mmol/L"},
        {"Bicarbonate", K::lab, 1, "mmol/L"},
        {"Calcium", K::lab, 2, "mmol/L"},
        {"Phosphate", K::lab, 2, "mmol/L"},
        {"Magnesium", K::lab, 2, "mmol/L"},
        {"INR", K::lab, 3, "ratio"},
        {"ALT", K::lab, 4, "U/L"},
        {"Bilirubin", K::lab, 4, "umol/L"},
        {"ALP", K::lab, 4, "U/L"},
        {"Lactate", K::lab, 5, "mmol/L"},
        {"pH", K::lab, 6, "pH"},
        {"PaCO2", K::lab, 6, "mmHg"},
        {"PaO2", K::lab, 6, "mmHg"},
        {"Creatinine", K::lab, 7, "umol/L"},
        {"BloodUreaNitrogen", K::lab, 7, "mmol/L"},
        {"Troponin", K::lab, 8, "ng/L"},
        {"CreatinineKinase", K::lab, 9, "U/L"},
        {"Temperature", K::vital, -1, "C"},
        {"UrineOutput", K::vital, -1, "mL"},
        {"MinuteVentilation", K::vital, -1, "L/min"},
        {"AirwayPressure", K::vital, -1, "cmH2O"},
        {"PEEP", K::vital, -1, "cmH2O"},
        {"Transfusions", K::treatment, -1, "units"},
        {"Vasopressors", K::treatment, -1, "mcg/kg/min"},
        {"Dialysis", K::treatment, -1, "flag"},
        {"Antibiotics", K::treatment, -1, "flag"},
        {"Antiarrhythmics", K::treatment, -1, "flag"},
        {"Anticoagulants", K::treatment, -1, "flag"},
        {"Propofol", K::treatment, -1, "flag"},
        {"ICPMonitor", K::treatment, -1, "flag"},
        {"KReplacement", K::treatment, -1, "flag"},
        {"CaReplacement", K::treatment, -1, "flag"},
        {"PReplacement", K::treatment, -1, "flag"},
        {"MgReplacement", K::treatment, -1, "flag"},
        {"Diuretics", K::treatment, -1, "flag"},
        {"HepatotoxicDrugs", K::treatment, -1, "flag"},
    };
    std::vector<Feature> feats;
    for (const auto& [name, kind, panel, unit] : spec) {
      Feature f;
      f.id = feats.size();
      f.name = name;
      f.kind = kind;
      if (panel >= 0) f.panel = static_cast<std::size_t>(panel);
      f.unit = unit;
      feats.push_back(std::move(f));
    }
    return FeatureCatalog({kTestNames.begin(), kTestNames.end()}, std::move(feats));
  }();
  return cat;
}

std::optional<std::size_t> FeatureCatalog::feature_id(std::string_view name) const {
  for (const auto& f : features_)
    if (f.name == name) return f.id;
  return std::nullopt;
}

std::optional<std::size_t> FeatureCatalog::test_index(std::string_view name) const {
  for (std::size_t j = 0; j < tests_.size(); ++j)
    if (tests_[j] == name) return j;
  return std::nullopt;
}

nlohmann::json FeatureCatalog::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features_) {
    feats.push_back({{"name", f.name},
                     {"kind", std::string(to_string(f.kind))},
                     {"panel", f.panel ? nlohmann::json(tests_[*f.panel]) : nlohmann::json(nullptr)},
                     {"unit", f.unit}});
  }
  return {{"tests", tests_},
          {"features", feats},
          {"note", "cost vectors are listed in the same order as tests"}};
}

FeatureCatalog FeatureCatalog::from_json(const nlohmann::json& j) {
  try {
    auto tests = j.at("tests").get<std::vector<std::string>>();
    std::vector<Feature> feats;
    for (const auto& fj : j.at("features")) {
      Feature f;
      f.id = feats.size();
      f.name = fj.at("name").get<std::string>();
      f.kind = feature_kind_from_string(fj.at("kind").get<std::string>());
      if (fj.contains("panel") && !fj.at("panel").is_null()) {
        const auto p = fj.at("panel").get<std::string>();
        std::optional<std::size_t> idx;
        for (std::size_t t = 0; t < tests.size(); ++t)
          if (tests[t] == p) idx = t;
        if (!idx) throw DataError("feature '" + f.name + "' has unknown panel '" + p + "'");
        f.panel = idx;
      }
      f.unit = fj.value("unit", "");
      feats.push_back(std::move(f));
    }
    return FeatureCatalog(std::move(tests), std::move(feats));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed catalog: ") + e.what());
  }
}

}  // namespace labpolicy::core
