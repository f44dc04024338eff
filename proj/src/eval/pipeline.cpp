#include "labpolicy/eval/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "labpolicy/error.hpp"
#include "labpolicy/eval/explain.hpp"
#include "labpolicy/numeric/rng.hpp"
#include "labpolicy/outcome/outcome.hpp"
#include "labpolicy/synth/generator.hpp"

namespace labpolicy::eval {

using numeric::derive_seed;
using numeric::Matrix;

SeedLayout::SeedLayout(const fs::path& root, std::uint64_t seed) : dir(root / ("seed_" + std::to_string(seed))) {}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("missing ") + what + " (" + path.string() + ")");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path, const char* what) {
  try {
    return nlohmann::json::parse(read_text(path, what));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed ") + what + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

Matrix rows_to_matrix(const std::vector<std::vector<std::uint8_t>>& rows, std::size_t k) {
  Matrix m(rows.size(), k);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < k; ++j) m(i, j) = rows[i].at(j);
  return m;
}

}  // namespace

rules::RuleSet load_ruleset(const RulesOptions& opts, const core::FeatureCatalog& catalog) {
  if (opts.path) return rules::load_rules(*opts.path, catalog);
  return rules::default_ruleset();
}

core::RawWindow window_with_forecast(const core::RawWindow& raw, const Matrix& forecast,
                                     const core::FeatureStats& stats, const core::FeatureCatalog& catalog) {
  core::RawWindow w = raw;
  w.anchor = raw.anchor + static_cast<double>(forecast.rows);
  for (std::size_t f = 0; f < catalog.d(); ++f) {
    if (catalog.feature(f).kind == core::FeatureKind::treatment) continue;
    for (std::size_t h = 0; h < forecast.rows; ++h)
      w.by_feature[f].emplace_back(raw.anchor + static_cast<double>(h) + 0.5, stats.unstandardize(f, forecast(h, f)));
  }
  return w;
}

void run_stage(const SeedLayout& layout, const std::string& stage, const std::function<void()>& f) {
  auto fail = [&](const std::exception& e) {
    try {
      write_text(layout.failed(), "stage: " + stage + "\nerror: " + e.what() + "\n");
    } catch (...) {
    }
    return "stage " + stage + ": " + e.what();
  };
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(fail(e));
  } catch (const DataError& e) {
    throw DataError(fail(e));
  } catch (const NumericError& e) {
    throw NumericError(fail(e));
  } catch (const std::exception& e) {
    throw DataError(fail(e));
  }
}

SeedRun::SeedRun(const RunConfig& base, std::uint64_t seed, const fs::path& out_root)
    : cfg_(base.for_seed(seed)), seed_(seed), layout_(out_root, seed), catalog_(&core::FeatureCatalog::icu_default()) {
  cfg_.validate();
  if (cfg_.cohort.d_features != catalog_->d())
    throw ConfigError("cohort.d_features must equal the catalog size (" + std::to_string(catalog_->d()) + ")");
  rules_ = load_ruleset(cfg_.rules, *catalog_);
}

void SeedRun::timed(const std::string& stage, const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  timings_.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

void SeedRun::write_timings() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [s, t] : timings_) j.push_back({{"stage", s}, {"seconds", t}});
  write_json(layout_.logs() / "timing.json", j);
}

void SeedRun::require_stays() const {
  if (stays_.empty()) throw DataError("no cohort loaded");
}

void SeedRun::generate() {
  timed("generate", [&] {
    fs::create_directories(layout_.dir);
    stays_ = synth::generate(cfg_.cohort, *catalog_, rules_);
    core::save_cohort(layout_.cohort(), stays_, *catalog_);
  });
}

void SeedRun::load_cohort() {
  if (!fs::exists(layout_.cohort())) throw DataError("missing cohort (" + layout_.cohort().string() + "); run generate");
  stays_ = core::load_cohort(layout_.cohort(), *catalog_);
  require_stays();
}

const core::SplitIndices& SeedRun::split() {
  require_stays();
  if (!split_) {
    const auto& e = cfg_.eval;
    split_ = core::split(stays_.size(), e.train_ratio, e.val_ratio, e.test_ratio, derive_seed(seed_, {0x5B17}));
    if (split_->train.empty() || split_->val.empty() || split_->test.empty())
      throw DataError("cohort too small for a train/val/test split");
  }
  return *split_;
}

const core::FeatureStats& SeedRun::stats() {
  if (!stats_) {
    std::vector<const core::PatientStay*> train;
    for (auto i : split().train) train.push_back(&stays_[i]);
    stats_ = core::fit_stats(train, catalog_->d());
  }
  return *stats_;
}

void SeedRun::prepare() {
  if (!windows_.empty()) return;
  const auto& st = stats();
  windows_.reserve(stays_.size());
  for (const auto& s : stays_) windows_.push_back(core::make_window(s, st));
}

void SeedRun::compute_bounds() {
  require_stays();
  const bool with_future = cfg_.rules.include_predicted_future && cfg_.rules.enabled;
  if (with_future) {
    if (!forecaster_) load_forecaster();
    forecast_all();
  }
  timed("bounds", [&] {
    bounds_.clear();
    const std::size_t k = catalog_->k();
    for (std::size_t i = 0; i < stays_.size(); ++i) {
      const auto& s = stays_[i];
      if (s.observed_order.size() != k) throw DataError("stay " + s.stay_id + " has a malformed observed order");
      if (!cfg_.rules.enabled) {
        bounds_.push_back({std::vector<std::uint8_t>(k, 0), std::vector<std::uint8_t>(k, 1), {}});
      } else if (with_future) {
        const auto w = window_with_forecast(windows_[i].raw_prev, forecasts_[i], stats(), *catalog_);
        bounds_.push_back(rules::compute_bounds(w, rules_, s.observed_order));
      } else {
        bounds_.push_back(rules::compute_bounds(core::RawWindow::from_stay(s, catalog_->d()), rules_, s.observed_order));
      }
    }
    std::string text;
    for (std::size_t i = 0; i < stays_.size(); ++i) text += rules::bounds_to_json_line(stays_[i].stay_id, bounds_[i]) + "\n";
    write_text(layout_.bounds(), text);
    if (cfg_.rules.enabled) write_json(layout_.logs() / "calibration.json", synth::calibration_report(stays_, bounds_).to_json());
  });
}

void SeedRun::load_bounds() {
  require_stays();
  std::istringstream in(read_text(layout_.bounds(), "bounds; run bounds"));
  std::vector<rules::OrderBounds> b;
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto [id, bounds] = rules::bounds_from_json_line(line);
    if (i >= stays_.size() || id != stays_[i].stay_id) throw DataError("bounds file does not match the cohort at line " + std::to_string(i + 1));
    b.push_back(std::move(bounds));
    ++i;
  }
  if (b.size() != stays_.size()) throw DataError("bounds file is missing stays");
  bounds_ = std::move(b);
}

void SeedRun::train_forecaster() {
  require_stays();
  prepare();
  timed("forecaster", [&] {
    std::vector<const core::StayWindow*> tr, va;
    for (auto i : split().train) tr.push_back(&windows_[i]);
    for (auto i : split().val) va.push_back(&windows_[i]);
    std::vector<forecast::ForecastEpochLog> log;
    forecaster_ = forecast::train_forecaster(forecast::forecast_samples(tr), forecast::forecast_samples(va),
                                             catalog_->d(), cfg_.forecaster, &log);
    write_json(layout_.forecaster(), forecaster_->to_json());
    write_json(layout_.feature_stats(), stats().to_json());
    std::ostringstream csv;
    csv << "lr,epoch,train_mse,val_mse\n";
    for (const auto& e : log)
      csv << format_number(e.lr) << ',' << e.epoch << ',' << format_number(e.train_mse) << ','
          << format_number(e.val_mse) << '\n';
    write_text(layout_.logs() / "forecaster.csv", csv.str());
  });
  forecasts_.clear();
}

void SeedRun::load_forecaster() {
  forecaster_ = forecast::ForecastModel::from_json(read_json(layout_.forecaster(), "forecaster; run train-forecaster"));
  if (forecaster_->d != catalog_->d()) throw DataError("forecaster width does not match the catalog");
  forecasts_.clear();
}

const forecast::ForecastModel& SeedRun::forecaster() const {
  if (!forecaster_) throw DataError("no forecaster trained or loaded");
  return *forecaster_;
}

void SeedRun::forecast_all() {
  if (!forecasts_.empty()) return;
  prepare();
  std::vector<const Matrix*> xs;
  for (const auto& w : windows_) xs.push_back(&w.x_prev);
  forecasts_ = forecaster().predict_many(xs);
}

const policy::PolicyData& SeedRun::data(Split s) {
  const auto idx = static_cast<std::size_t>(s);
  auto& slot = data_[idx];
  if (!slot) {
    if (bounds_.size() != stays_.size()) throw DataError("bounds are missing for the cohort");
    forecast_all();
    const auto& rows = s == Split::train ? split().train : s == Split::val ? split().val : split().test;
    const bool true_future = s == Split::test && cfg_.eval.oracle_future;
    const std::size_t d = catalog_->d(), k = catalog_->k();
    policy::PolicyData pd;
    pd.contexts = Matrix(rows.size(), (core::kPrevHours + core::kPostHours) * d);
    pd.d = Matrix(rows.size(), k);
    std::vector<std::vector<std::uint8_t>> lo, hi, star;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = rows[r];
      const auto& w = windows_[i];
      const auto ctx = policy_context(w, forecasts_[i], cfg_.eval.no_future);
      std::copy(ctx.data.begin(), ctx.data.end(), pd.contexts.row(r).begin());
      if (true_future && !w.x_post_true) throw DataError("stay " + stays_[i].stay_id + " has no observed future");
      const Matrix& future = true_future ? *w.x_post_true : forecasts_[i];
      const auto totals = outcome::panel_totals(
          outcome::panel_changes(w.x_prev, w.obs_mask_prev, future, *catalog_, cfg_.outcome.panel_average));
      std::copy(totals.begin(), totals.end(), pd.d.row(r).begin());
      lo.push_back(bounds_[i].t_min);
      hi.push_back(bounds_[i].t_max);
      star.push_back(stays_[i].observed_order);
    }
    pd.t_min = rows_to_matrix(lo, k);
    pd.t_max = rows_to_matrix(hi, k);
    pd.t_star = rows_to_matrix(star, k);
    slot = std::move(pd);
    data_has_gps_[idx] = false;
  }
  if (gps_ && !data_has_gps_[idx]) {
    slot->gps_embedding = gps_->embed(slot->contexts);
    data_has_gps_[idx] = true;
  }
  return *slot;
}

void SeedRun::train_gps() {
  timed("gps", [&] {
    const auto& tr = data(Split::train);
    const auto& va = data(Split::val);
    std::vector<gps::GpsEpochLog> log;
    auto model = gps::train_gps(tr.t_star, tr.contexts, va.t_star, va.contexts, cfg_.gps, &log);
    model.threshold = gps::reliability_threshold(model, tr.t_star, tr.contexts, cfg_.gps.quantile);
    gps_ = std::move(model);
    for (auto& h : data_has_gps_) h = false;
    write_json(layout_.gps(), gps_->to_json());
    std::ostringstream csv;
    csv << "lr,epoch,train_nll,val_nll\n";
    for (const auto& e : log)
      csv << format_number(e.lr) << ',' << e.epoch << ',' << format_number(e.train_nll) << ','
          << format_number(e.val_nll) << '\n';
    write_text(layout_.logs() / "gps.csv", csv.str());
  });
}

void SeedRun::load_gps() {
  gps_ = gps::GpsModel::from_json(read_json(layout_.gps(), "GPS model; run train-gps"));
  for (auto& h : data_has_gps_) h = false;
}

void SeedRun::train_policy(bool with_gps) {
  if (with_gps && !gps_) throw DataError("training with the GPS constraint needs a GPS model; run train-gps");
  timed(with_gps ? "policy-gps" : "policy", [&] {
    policy::PolicyConfig pc = cfg_.policy;
    pc.use_gps = with_gps;
    pc.seed = derive_seed(cfg_.policy.seed, {with_gps ? 1u : 0u});
    const auto oc = cfg_.outcome.config(catalog_->k(), pc.beta1, pc.beta2, outcome::Mode::smooth);
    std::vector<policy::PolicyEpochLog> log;
    auto m = policy::train_policy(data(Split::train), data(Split::val), with_gps ? gps() : nullptr, pc, oc, &log);
    write_json(layout_.policy(with_gps), m.to_json());
    (with_gps ? policy_gps_ : policy_plain_) = std::move(m);
    std::ostringstream csv;
    csv << "restart,epoch,loss,val_objective,mean_lambda,violation_fraction\n";
    for (const auto& e : log)
      csv << e.restart << ',' << e.epoch << ',' << format_number(e.loss) << ',' << format_number(e.val_objective)
          << ',' << format_number(e.mean_lambda) << ',' << format_number(e.violation_fraction) << '\n';
    write_text(layout_.logs() / (with_gps ? "policy_gps.csv" : "policy_nogps.csv"), csv.str());
  });
}

void SeedRun::load_policy(bool with_gps) {
  auto m = policy::PolicyModel::from_json(read_json(layout_.policy(with_gps), "policy model; run train-policy"));
  (with_gps ? policy_gps_ : policy_plain_) = std::move(m);
}

const policy::PolicyModel& SeedRun::policy(bool with_gps) const {
  const auto& m = with_gps ? policy_gps_ : policy_plain_;
  if (!m) throw DataError(with_gps ? "no GPS-constrained policy" : "no unconstrained policy");
  return *m;
}

std::vector<ReportRow> SeedRun::evaluate() {
  std::vector<ReportRow> rows;
  timed("evaluate", [&] {
    const auto& test = data(Split::test);
    EvalInputs in;
    in.test = &test;
    in.gps = gps();
    if (in.gps) {
      if (!in.gps->threshold) throw DataError("GPS model has no reliability threshold");
      in.eps = *in.gps->threshold;
    }
    in.alpha = cfg_.outcome.config(catalog_->k(), 1, 1, outcome::Mode::hard).alpha;
    in.beta1 = cfg_.eval.beta1;
    in.beta2 = cfg_.eval.beta2;
    for (std::size_t r = 0; r < cfg_.eval.random_p.size(); ++r) {
      const double p = cfg_.eval.random_p[r];
      rows.push_back(evaluate_actions(
          "Random" + format_number(p), seed_,
          policy::baseline_orders(policy::BaselineKind::random, test, p, derive_seed(seed_, {0xE7, r})), in));
    }
    rows.push_back(evaluate_actions("LowerBound", seed_, policy::baseline_orders(policy::BaselineKind::lower, test), in));
    rows.push_back(evaluate_actions("UpperBound", seed_, policy::baseline_orders(policy::BaselineKind::upper, test), in));
    rows.push_back(
        evaluate_actions("Physician", seed_, policy::baseline_orders(policy::BaselineKind::physician, test), in));
    rows.push_back(evaluate_actions("Ours(w/o GPS)", seed_, policy::binarize(policy(false).act(test.contexts)), in));
    if (policy_gps_)
      rows.push_back(evaluate_actions("Ours(w GPS)", seed_, policy::binarize(policy(true).act(test.contexts)), in));
  });
  return rows;
}

void SeedRun::write_plots() {
  forecast_all();
  const auto& test = split().test;
  const std::size_t n = std::min(cfg_.eval.plot_stays, test.size());
  for (std::size_t s = 0; s < n; ++s) {
    const auto i = test[s];
    const auto& w = windows_[i];
    const auto& pred = forecasts_[i];
    for (std::size_t j = 0; j < catalog_->k(); ++j) {
      std::ostringstream csv;
      csv << "feature,hour,series,value\n";
      for (auto f : catalog_->panel_features(j)) {
        const auto& name = catalog_->feature(f).name;
        for (std::size_t h = 0; h < w.x_prev.rows; ++h)
          if (w.obs_mask_prev(h, f) > 0)
            csv << name << ',' << static_cast<long>(h) - static_cast<long>(core::kPrevHours) << ",observed,"
                << format_number(stats().unstandardize(f, w.x_prev(h, f))) << '\n';
        for (std::size_t h = 0; h < pred.rows; ++h)
          csv << name << ',' << h << ",predicted," << format_number(stats().unstandardize(f, pred(h, f))) << '\n';
        if (w.x_post_true && w.obs_mask_post)
          for (std::size_t h = 0; h < w.x_post_true->rows; ++h)
            if ((*w.obs_mask_post)(h, f) > 0)
              csv << name << ',' << h << ",actual," << format_number(stats().unstandardize(f, (*w.x_post_true)(h, f)))
                  << '\n';
      }
      write_text(layout_.plots() / (stays_[i].stay_id + "_" + catalog_->tests()[j] + ".csv"), csv.str());
    }
  }
}

std::optional<std::size_t> SeedRun::find_stay(const std::string& stay_id) const {
  for (std::size_t i = 0; i < stays_.size(); ++i)
    if (stays_[i].stay_id == stay_id) return i;
  return std::nullopt;
}

nlohmann::json SeedRun::search(std::size_t trials, std::uint64_t search_seed) {
  static const double betas[] = {0, 1, 10, 100};
  static const double lrs[] = {5e-3, 1e-3, 5e-4, 1e-4};
  static const double lambdas[] = {1, 5, 10};
  static const std::size_t batches[] = {32, 64, 128};
  static const std::size_t widths[] = {128, 256};
  numeric::Rng rng(derive_seed(search_seed, {0x5EA}));
  auto pick = [&](const auto& arr) { return arr[rng() % std::size(arr)]; };

  const auto& tr = data(Split::train);
  const auto& va = data(Split::val);
  const double eps = gps_ ? policy::constraint_threshold(cfg_.policy, gps()) : 0.0;
  auto hard = cfg_.outcome.config(catalog_->k(), cfg_.eval.beta1, cfg_.eval.beta2, outcome::Mode::hard);

  nlohmann::json out;
  out["trials"] = nlohmann::json::array();
  std::vector<double> scores;
  for (std::size_t t = 0; t < trials; ++t) {
    policy::PolicyConfig pc = cfg_.policy;
    pc.use_gps = gps_.has_value();
    pc.beta1 = pick(betas);
    pc.beta2 = pick(betas);
    pc.lr = pick(lrs);
    pc.lambda_init = pick(lambdas);
    pc.batch_size = pick(batches);
    const std::size_t w = pick(widths);
    pc.hidden = {w, w};
    pc.seed = derive_seed(search_seed, {0x5EB, t});
    const auto oc = cfg_.outcome.config(catalog_->k(), pc.beta1, pc.beta2, outcome::Mode::smooth);
    const auto m = policy::train_policy(tr, va, gps(), pc, oc);
    const double score = policy::selection_score(policy::binarize(m.act(va.contexts)), va, gps(), eps, hard);
    scores.push_back(score);
    out["trials"].push_back({{"trial", t},
                             {"beta1", pc.beta1},
                             {"beta2", pc.beta2},
                             {"lr", pc.lr},
                             {"lambda_init", pc.lambda_init},
                             {"batch_size", pc.batch_size},
                             {"hidden", pc.hidden},
                             {"epochs", m.epochs},
                             {"val_score", score}});
  }
  out["best"] = policy::select_best(scores);
  out["use_gps"] = gps_.has_value();
  return out;
}

void write_report(const Report& r, const fs::path& json_path, const fs::path& csv_path) {
  write_text(json_path, r.to_json().dump(2) + "\n");
  write_text(csv_path, r.to_csv());
}

void write_seed_report(const SeedRun& run, const std::vector<ReportRow>& rows) {
  Report r;
  r.seeds = {run.seed()};
  r.config = run.config().to_json();
  r.rows = rows;
  r.aggregate_rows();
  write_report(r, run.layout().report_json(), run.layout().report_csv());
}

std::vector<ReportRow> run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& out_root) {
  const SeedLayout layout(out_root, seed);
  std::optional<SeedRun> run;
  run_stage(layout, "config", [&] { run.emplace(cfg, seed, out_root); });
  fs::create_directories(layout.dir);
  fs::remove(layout.failed());
  const bool late_bounds = run->config().rules.include_predicted_future && run->config().rules.enabled;

  run_stage(layout, "generate", [&] { run->generate(); });
  if (!late_bounds) run_stage(layout, "bounds", [&] { run->compute_bounds(); });
  run_stage(layout, "train-forecaster", [&] { run->train_forecaster(); });
  if (late_bounds) run_stage(layout, "bounds", [&] { run->compute_bounds(); });
  run_stage(layout, "train-gps", [&] { run->train_gps(); });
  run_stage(layout, "train-policy", [&] { run->train_policy(false); });
  run_stage(layout, "train-policy-gps", [&] { run->train_policy(true); });
  std::vector<ReportRow> rows;
  run_stage(layout, "evaluate", [&] {
    rows = run->evaluate();
    write_seed_report(*run, rows);
    run->write_plots();
  });
  run->write_timings();
  return rows;
}

Report run_pipeline(const RunConfig& cfg, const fs::path& out_root) {
  cfg.validate();
  Report report;
  report.seeds = cfg.eval.seeds;
  report.config = cfg.to_json();
  for (auto seed : cfg.eval.seeds) {
    auto rows = run_seed(cfg, seed, out_root);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  report.aggregate_rows();
  write_report(report, out_root / "report.json", out_root / "report.csv");
  return report;
}

}  // namespace labpolicy::eval
