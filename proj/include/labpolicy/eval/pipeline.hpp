#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "labpolicy/core/catalog.hpp"
#include "labpolicy/core/stay.hpp"
#include "labpolicy/core/window.hpp"
#include "labpolicy/eval/config.hpp"
#include "labpolicy/eval/report.hpp"
#include "labpolicy/forecast/forecaster.hpp"
#include "labpolicy/gps/flow.hpp"
#include "labpolicy/policy/policy.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::eval {

namespace fs = std::filesystem;

struct SeedLayout {
  fs::path dir;

  SeedLayout(const fs::path& root, std::uint64_t seed);
  fs::path cohort() const { return dir / "cohort.jsonl"; }
  fs::path bounds() const { return dir / "bounds.jsonl"; }
  fs::path feature_stats() const { return dir / "models" / "feature_stats.json"; }
  fs::path forecaster() const { return dir / "models" / "forecaster.json"; }
  fs::path gps() const { return dir / "models" / "gps.json"; }
  fs::path policy(bool with_gps) const {
    return dir / "models" / (with_gps ? "policy_gps.json" : "policy_nogps.json");
  }
  fs::path report_json() const { return dir / "report.json"; }
  fs::path report_csv() const { return dir / "report.csv"; }
  fs::path logs() const { return dir / "logs"; }
  fs::path plots() const { return dir / "plots"; }
  fs::path failed() const { return dir / "FAILED"; }
};

rules::RuleSet load_ruleset(const RulesOptions& opts, const core::FeatureCatalog& catalog);

// Observed window extended with the forecast hours (labs and vitals only),
// re-anchored at the end of the forecast.
core::RawWindow window_with_forecast(const core::RawWindow& raw, const numeric::Matrix& forecast,
                                     const core::FeatureStats& stats, const core::FeatureCatalog& catalog);

enum class Split { train, val, test };

// One seed's run. Each step either computes a stage (and writes its
// artifacts) or loads the artifacts a previous invocation wrote.
class SeedRun {
 public:
  SeedRun(const RunConfig& base, std::uint64_t seed, const fs::path& out_root);

  const RunConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const SeedLayout& layout() const { return layout_; }
  const core::FeatureCatalog& catalog() const { return *catalog_; }
  const rules::RuleSet& rules() const { return rules_; }

  void generate();
  void load_cohort();
  void compute_bounds();
  void load_bounds();
  void train_forecaster();
  void load_forecaster();
  void train_gps();
  void load_gps();
  void train_policy(bool with_gps);
  void load_policy(bool with_gps);
  std::vector<ReportRow> evaluate();
  void write_plots();

  const std::vector<core::PatientStay>& stays() const { return stays_; }
  const std::vector<rules::OrderBounds>& bounds() const { return bounds_; }
  const core::SplitIndices& split();
  const core::FeatureStats& stats();
  const forecast::ForecastModel& forecaster() const;
  const gps::GpsModel* gps() const { return gps_ ? &*gps_ : nullptr; }
  const policy::PolicyModel& policy(bool with_gps) const;

  // Learner inputs for a split; the test split scores the true future under
  // oracle_future. Carries GPS embeddings once a GPS is available.
  const policy::PolicyData& data(Split s);

  std::optional<std::size_t> find_stay(const std::string& stay_id) const;

  // Random search over policy hyperparameters, scored on validation with the
  // evaluation betas. Returns one record per trial plus the best index.
  nlohmann::json search(std::size_t trials, std::uint64_t search_seed);

  // Stage wall times in seconds, in run order.
  const std::vector<std::pair<std::string, double>>& timings() const { return timings_; }
  void write_timings() const;

 private:
  void require_stays() const;
  void prepare();
  void forecast_all();
  void timed(const std::string& stage, const std::function<void()>& f);

  RunConfig cfg_;
  std::uint64_t seed_;
  SeedLayout layout_;
  const core::FeatureCatalog* catalog_;
  rules::RuleSet rules_;

  std::vector<core::PatientStay> stays_;
  std::vector<rules::OrderBounds> bounds_;
  std::optional<core::SplitIndices> split_;
  std::optional<core::FeatureStats> stats_;
  std::vector<core::StayWindow> windows_;
  std::optional<forecast::ForecastModel> forecaster_;
  std::vector<numeric::Matrix> forecasts_;
  std::optional<gps::GpsModel> gps_;
  std::optional<policy::PolicyModel> policy_gps_, policy_plain_;
  std::optional<policy::PolicyData> data_[3];
  bool data_has_gps_[3] = {false, false, false};
  std::vector<std::pair<std::string, double>> timings_;
};

// Runs `f` as the named stage; on failure writes the FAILED marker naming the
// stage and rethrows the same error category with the stage prefixed.
void run_stage(const SeedLayout& layout, const std::string& stage, const std::function<void()>& f);

// report.json / report.csv in the seed directory.
void write_seed_report(const SeedRun& run, const std::vector<ReportRow>& rows);

// Every stage for one seed, writing all artifacts; returns that seed's rows.
std::vector<ReportRow> run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& out_root);

// All configured seeds plus the aggregate; writes report.json / report.csv
// under out_root and per seed.
Report run_pipeline(const RunConfig& cfg, const fs::path& out_root);

void write_report(const Report& r, const fs::path& json_path, const fs::path& csv_path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace labpolicy::eval
