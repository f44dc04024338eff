#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace labpolicy::core {

inline constexpr std::size_t kNumTests = 10;
inline constexpr std::array<std::string_view, kNumTests> kTestNames = {
    "CBC", "Electrolytes", "CalciumProfile", "INR", "LiverProfile",
    "Lactate", "ABG", "Creatinine", "Troponin", "CK"};

enum class FeatureKind { lab, vital, treatment };

std::string_view to_string(FeatureKind k);
FeatureKind feature_kind_from_string(std::string_view s);

struct Feature {
  std::size_t id = 0;
  std::string name;
  FeatureKind kind = FeatureKind::lab;
  std::optional<std::size_t> panel;  // index into tests, labs only
  std::string unit;
};

class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  // Validates: fixed test list, dense ids, unique names, panels on labs only.
  FeatureCatalog(std::vector<std::string> tests, std::vector<Feature> features);

  // The 40-feature ICU catalog used by the generator and the shipped rules.
  static const FeatureCatalog& icu_default();

  std::size_t d() const { return features_.size(); }
  std::size_t k() const { return tests_.size(); }
  const std::vector<std::string>& tests() const { return tests_; }
  const std::vector<Feature>& features() const { return features_; }
  const Feature& feature(std::size_t id) const { return features_.at(id); }

  std::optional<std::size_t> feature_id(std::string_view name) const;
  std::optional<std::size_t> test_index(std::string_view name) const;
  // Lab features whose panel is test j, in id order.
  const std::vector<std::size_t>& panel_features(std::size_t test) const { return panels_.at(test); }

  nlohmann::json to_json() const;
  static FeatureCatalog from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tests_;
  std::vector<Feature> features_;
  std::vector<std::vector<std::size_t>> panels_;
};

}  // namespace labpolicy::core
