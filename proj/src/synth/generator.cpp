#include "labpolicy/synth/generator.hpp"

#include <algorithm>
#include <cmath>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/rng.hpp"

namespace labpolicy::synth {

using numeric::Rng;

void GenConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("cohort.") + name + " must be in [0, 1]");
  };
  unit(q, "q");
  unit(r, "r");
  unit(rho, "rho");
  unit(episode_prob, "episode_prob");
  if (n_stays < 1) throw ConfigError("cohort.n_stays must be at least 1");
  if (!(sigma_s > 0)) throw ConfigError("cohort.sigma_s must be positive");
  if (!(lab_rate > 0)) throw ConfigError("cohort.lab_rate must be positive");
  if (!(treatment_rate > 0)) throw ConfigError("cohort.treatment_rate must be positive");
  if (!(severity_loading >= 0)) throw ConfigError("cohort.severity_loading must be non-negative");
  if (!std::isfinite(gamma)) throw ConfigError("cohort.gamma must be finite");
}

namespace {

// Organ systems share indices with the tests that examine them.
enum Organ { heme, elec, mineral, coag, liver, perfusion, resp, renal, cardiac, muscle, kOrgans };

struct LabSpec {
  const char* name;
  Organ organ;
  bool multiplicative;  // value = base * exp(slope*u + noise*e), else base + slope*u + noise*e
  double base, slope, noise;
  int decimals;
};

// Slopes point toward "sicker" as the organ latent grows.
constexpr LabSpec kLabs[] = {
    {"Hemoglobin", heme, false, 10.2, -1.4, 0.3, 1},
    {"WBC", heme, false, 8.0, 3.0, 0.6, 1},
    {"Platelets", heme, false, 230, -45, 12, 0},
    {"Sodium", elec, false, 139, 4.0, 0.8, 0},
    {"Potassium", elec, false, 4.0, 0.4, 0.12, 1},
    {"Bicarbonate", elec, false, 24, -2.2, 0.8, 0},
    {"Calcium", mineral, false, 2.32, -0.19, 0.04, 2},
    {"Phosphate", mineral, false, 1.1, 0.32, 0.06, 2},
    {"Magnesium", mineral, false, 0.96, -0.1, 0.03, 2},
    {"INR", coag, false, 1.15, 0.24, 0.04, 2},
    {"ALT", liver, true, 33, 0.6, 0.06, 0},
    {"Bilirubin", liver, true, 11, 0.75, 0.06, 0},
    {"ALP", liver, true, 85, 0.3, 0.05, 0},
    {"Lactate", perfusion, true, 1.3, 0.45, 0.06, 1},
    {"pH", perfusion, false, 7.40, -0.05, 0.012, 2},
    {"PaCO2", resp, false, 40, 4.0, 1.5, 0},
    {"PaO2", resp, false, 95, -12, 4, 0},
    {"Creatinine", renal, true, 88, 0.36, 0.05, 0},
    {"BloodUreaNitrogen", renal, true, 7, 0.4, 0.06, 1},
    {"Troponin", cardiac, true, 14, 0.9, 0.08, 0},
    {"CreatinineKinase", muscle, true, 140, 1.6, 0.08, 0},
};

struct TreatmentSpec {
  const char* name;
  Organ organ;
  double base_prob;  // daily trigger probability at u = 0
  double slope;      // log-odds per unit of organ latent
};

constexpr TreatmentSpec kTreatments[] = {
    {"Transfusions", heme, 0.025, 1.2},     {"Dialysis", renal, 0.02, 1.3},
    {"Antibiotics", heme, 0.06, 0.7},       {"Antiarrhythmics", cardiac, 0.03, 1.0},
    {"Anticoagulants", coag, 0.05, 0.0},    {"Propofol", resp, 0.04, 0.9},
    {"ICPMonitor", resp, 0.015, 0.0},       {"KReplacement", elec, 0.05, 0.8},
    {"CaReplacement", mineral, 0.05, 0.8},  {"PReplacement", mineral, 0.04, 0.8},
    {"MgReplacement", mineral, 0.05, 0.8},  {"Diuretics", renal, 0.05, 0.3},
    {"HepatotoxicDrugs", liver, 0.035, 0.0},
};

double round_to(double v, int decimals) {
  const double s = std::pow(10.0, decimals);
  return std::round(v * s) / s;
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

class StaySimulator {
 public:
  StaySimulator(const GenConfig& cfg, const core::FeatureCatalog& cat, std::size_t index)
      : cfg_(cfg), cat_(cat), rng_(numeric::derive_seed(cfg.seed, {index})) {}

  core::PatientStay run(std::size_t index, const rules::RuleSet& rules) {
    core::PatientStay stay;
    stay.stay_id = "S" + std::to_string(100000 + index);
    anchor_ = 48 + static_cast<int>(rng_() % 25);
    end_ = anchor_ + static_cast<int>(core::kPostHours);
    stay.anchor_hour = anchor_;
    simulate_latents();
    emit_labs(stay);
    emit_vitals(stay);
    emit_treatments(stay);
    stay.canonicalize();

    const auto raw = core::RawWindow::from_stay(stay, cat_.d());
    const auto t_min = rules::guideline_orders(raw, rules, cat_.k());
    stay.observed_order = physician_orders(t_min);
    return stay;
  }

 private:
  std::size_t fid(const char* name) const {
    const auto id = cat_.feature_id(name);
    if (!id) throw ConfigError(std::string("generator needs catalog feature '") + name + "'");
    return *id;
  }

  double u(int organ, double hour) const {
    const auto h = std::clamp(static_cast<int>(std::floor(hour)), 0, end_);
    return latent_[organ][static_cast<std::size_t>(h)];
  }

  void simulate_latents() {
    const std::size_t n = static_cast<std::size_t>(end_) + 1;
    const double stat_sd = cfg_.sigma_s / std::sqrt(std::max(1e-12, 1.0 - cfg_.rho * cfg_.rho));
    const double mu = numeric::normal(rng_, 0.0, 0.5);
    std::vector<double> s(n);
    s[0] = mu + numeric::normal(rng_, 0.0, stat_sd);
    for (std::size_t t = 1; t < n; ++t) s[t] = mu + cfg_.rho * (s[t - 1] - mu) + numeric::normal(rng_, 0.0, cfg_.sigma_s);

    latent_.assign(kOrgans, std::vector<double>(n, 0.0));
    for (int o = 0; o < kOrgans; ++o) {
      const double base = numeric::normal(rng_, 0.0, 0.6);
      double onset = 0, ramp = 1, mag = 0;
      if (numeric::bernoulli(rng_, cfg_.episode_prob)) {
        onset = anchor_ - 36 + 36 * numeric::uniform01(rng_);
        ramp = 24 + 24 * numeric::uniform01(rng_);
        mag = (numeric::bernoulli(rng_, 0.75) ? 1.0 : -1.0) * (1.2 + 1.6 * numeric::uniform01(rng_));
      }
      for (std::size_t t = 0; t < n; ++t) {
        const double frac = std::clamp((static_cast<double>(t) - onset) / ramp, 0.0, 1.0);
        latent_[o][t] = base + cfg_.severity_loading * s[t] + mag * frac;
      }
    }
    sodium_sign_ = numeric::bernoulli(rng_, 0.5) ? 1.0 : -1.0;
  }

  void emit_labs(core::PatientStay& stay) {
    const double rate = cfg_.lab_rate / 24.0;
    bool prev_lab = false;
    std::vector<std::vector<double>> draws(kOrgans);
    for (int o = 0; o < kOrgans; ++o) {
      double t = 0.0;
      for (;;) {
        t += -std::log(1.0 - numeric::uniform01(rng_)) / rate;
        if (t >= end_) break;
        draws[o].push_back(round_to(t, 2));
      }
    }
    for (int o = 0; o < kOrgans && !prev_lab; ++o)
      for (double t : draws[o])
        if (t >= anchor_ - 48 && t < anchor_) prev_lab = true;
    if (!prev_lab) draws[heme].push_back(round_to(anchor_ - 1 - 11 * numeric::uniform01(rng_), 2));

    for (int o = 0; o < kOrgans; ++o)
      for (double t : draws[o])
        for (const auto& lab : kLabs) {
          if (lab.organ != o) continue;
          const double uo = u(o, t);
          const double e = numeric::normal(rng_);
          double v;
          if (lab.multiplicative) {
            v = lab.base * std::exp(lab.slope * uo + lab.noise * e);
          } else {
            const double sign = (std::string_view(lab.name) == "Sodium") ? sodium_sign_ : 1.0;
            v = lab.base + sign * lab.slope * uo + lab.noise * e;
          }
          if (std::string_view(lab.name) == "pH") v = std::clamp(v, 6.8, 7.7);
          v = std::max(v, std::pow(10.0, -lab.decimals));
          stay.observations.push_back({t, fid(lab.name), round_to(v, lab.decimals)});
        }
  }

  void emit_vitals(core::PatientStay& stay) {
    const auto temp = fid("Temperature"), urine = fid("UrineOutput"), mv = fid("MinuteVentilation"),
               paw = fid("AirwayPressure"), peep = fid("PEEP");
    // Diuretic doses (drawn with treatments) raise urine output for 12h.
    for (int h = 0; h < end_; ++h) {
      const double hd = h;
      double boost = 1.0;
      for (double dt : diuretic_hours_)
        if (hd >= dt && hd < dt + 12) boost = 2.6;
      const double uo = std::max(0.0, boost * 75.0 * std::exp(-0.35 * u(renal, hd)) + numeric::normal(rng_, 0, 10));
      stay.observations.push_back({hd, urine, std::round(uo)});
      if (h % 4 == 0) {
        const double t = 36.9 + 0.55 * std::max(u(heme, hd), -1.0) + numeric::normal(rng_, 0, 0.2);
        stay.observations.push_back({hd, temp, round_to(t, 1)});
        const double level = std::max(0.0, u(resp, hd) - 0.3);
        stay.observations.push_back({hd, peep, 5.0 + 2.0 * std::floor(level / 0.7)});
      }
      if (h % 2 == 0) {
        const double r = u(resp, hd);
        stay.observations.push_back({hd, mv, round_to(8.0 * std::exp(0.13 * r) * (1 + numeric::normal(rng_, 0, 0.02)), 1)});
        stay.observations.push_back({hd, paw, round_to(18.0 * std::exp(0.12 * r) * (1 + numeric::normal(rng_, 0, 0.02)), 1)});
      }
    }
  }

  void emit_treatments(core::PatientStay& stay) {
    for (const auto& tr : kTreatments) {
      const auto f = fid(tr.name);
      for (int day = 0; day * 24 < end_; ++day) {
        const double mid = std::min(day * 24 + 12, end_ - 1);
        const double lo = logit(tr.base_prob) + std::log(cfg_.treatment_rate) + tr.slope * u(tr.organ, mid);
        if (!numeric::bernoulli(rng_, sigmoid(lo))) continue;
        const int span = std::min(24, end_ - day * 24);
        const int h = day * 24 + static_cast<int>(rng_() % static_cast<unsigned>(span));
        stay.observations.push_back({static_cast<double>(h), f, 1.0});
        if (h + 1 < end_) stay.observations.push_back({static_cast<double>(h + 1), f, 0.0});
        if (std::string_view(tr.name) == "Diuretics") diuretic_hours_.push_back(h);
      }
    }
    // Vasopressors run while perfusion is poor; dose tracks the shortfall.
    const auto vaso = fid("Vasopressors");
    const double threshold = 1.3 + numeric::normal(rng_, 0, 0.3);
    bool on = false;
    for (int h = 0; h < end_; ++h) {
      const double p = u(perfusion, h);
      if (p > threshold) {
        on = true;
        stay.observations.push_back({static_cast<double>(h), vaso, round_to(0.04 + 0.05 * (p - threshold), 3)});
      } else if (on) {
        on = false;
        stay.observations.push_back({static_cast<double>(h), vaso, 0.0});
      }
    }
  }

  // Guideline orders with misses, plus extras that favour panels whose organ
  // is about to change (the signal a clinician would act on).
  std::vector<std::uint8_t> physician_orders(const std::vector<std::uint8_t>& t_min) {
    std::vector<std::uint8_t> t(t_min.size(), 0);
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double drop_draw = numeric::uniform01(rng_);
      const double add_draw = numeric::uniform01(rng_);
      if (t_min[j]) {
        t[j] = drop_draw < cfg_.r ? 0 : 1;
        continue;
      }
      double p = cfg_.q;
      if (cfg_.q > 0.0 && cfg_.q < 1.0) {
        double prev = 0, post = 0;
        for (int h = anchor_ - 24; h < anchor_; ++h) prev += u(static_cast<int>(j), h);
        for (int h = anchor_; h < end_; ++h) post += u(static_cast<int>(j), h);
        const double informativeness = (std::abs(post - prev) / 24.0 - 0.5) / 0.5;
        p = sigmoid(logit(cfg_.q) + cfg_.gamma * informativeness);
      }
      t[j] = add_draw < p ? 1 : 0;
    }
    return t;
  }

  const GenConfig& cfg_;
  const core::FeatureCatalog& cat_;
  Rng rng_;
  int anchor_ = 48, end_ = 72;
  std::vector<std::vector<double>> latent_;
  double sodium_sign_ = 1.0;
  std::vector<int> diuretic_hours_;
};

}  // namespace

std::vector<core::PatientStay> generate(const GenConfig& config, const core::FeatureCatalog& catalog,
                                        const rules::RuleSet& rules) {
  config.validate();
  if (config.d_features != catalog.d())
    throw ConfigError("cohort.d_features is " + std::to_string(config.d_features) + " but the catalog has " +
                      std::to_string(catalog.d()) + " features");
  std::vector<core::PatientStay> out;
  out.reserve(config.n_stays);
  for (std::size_t i = 0; i < config.n_stays; ++i) out.push_back(StaySimulator(config, catalog, i).run(i, rules));
  return out;
}

nlohmann::json CalibrationStats::to_json() const {
  return {{"guideline_to_observed_ratio", guideline_to_observed_ratio},
          {"miss_rate", miss_rate},
          {"mean_observed_orders", mean_observed_orders},
          {"mean_guideline_orders", mean_guideline_orders},
          {"rule_fire_counts", rule_fire_counts},
          {"n_stays", n_stays}};
}

CalibrationStats calibration_report(const std::vector<core::PatientStay>& stays,
                                    const std::vector<rules::OrderBounds>& bounds) {
  if (stays.size() != bounds.size()) throw DataError("calibration_report: one bounds entry per stay required");
  CalibrationStats c;
  c.n_stays = stays.size();
  double n_min = 0, n_obs = 0, n_miss = 0;
  for (std::size_t i = 0; i < stays.size(); ++i) {
    const auto& t = stays[i].observed_order;
    const auto& b = bounds[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      n_min += b.t_min[j];
      n_obs += t[j];
      n_miss += (b.t_min[j] == 1 && t[j] == 0) ? 1 : 0;
    }
    for (const auto& name : b.fired_rules) ++c.rule_fire_counts[name];
  }
  if (n_obs == 0) throw DataError("calibration ratio undefined: no observed orders");
  if (n_min == 0) throw DataError("miss rate undefined: no guideline orders");
  c.guideline_to_observed_ratio = n_min / n_obs;
  c.miss_rate = n_miss / n_min;
  c.mean_observed_orders = n_obs / static_cast<double>(stays.size());
  c.mean_guideline_orders = n_min / static_cast<double>(stays.size());
  return c;
}

}  // namespace labpolicy::synth
