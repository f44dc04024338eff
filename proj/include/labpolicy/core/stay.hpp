#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "labpolicy/core/catalog.hpp"

namespace labpolicy::core {

struct Observation {
  double hour = 0.0;
  std::size_t feature = 0;
  double value = 0.0;
};

struct PatientStay {
  std::string stay_id;
  double anchor_hour = 0.0;
  std::vector<Observation> observations;  // sorted by hour (stable)
  std::vector<std::uint8_t> observed_order;  // t*, length K

  // Stable sort by hour; keeps same-hour observations in file order.
  void canonicalize();
};

// JSONL cohort file, one stay per line. Errors carry the 1-based line number.
std::vector<PatientStay> load_cohort(const std::filesystem::path& path, const FeatureCatalog& catalog);
std::vector<PatientStay> read_cohort(std::istream& in, const FeatureCatalog& catalog);
PatientStay stay_from_json_line(const std::string& line, const FeatureCatalog& catalog);

std::string stay_to_json_line(const PatientStay& stay, const FeatureCatalog& catalog);
void write_cohort(std::ostream& out, const std::vector<PatientStay>& stays, const FeatureCatalog& catalog);
void save_cohort(const std::filesystem::path& path, const std::vector<PatientStay>& stays,
                 const FeatureCatalog& catalog);

void save_catalog(const std::filesystem::path& path, const FeatureCatalog& catalog);
FeatureCatalog load_catalog(const std::filesystem::path& path);

}  // namespace labpolicy::core
