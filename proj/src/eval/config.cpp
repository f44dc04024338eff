#include "labpolicy/eval/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/rng.hpp"

namespace labpolicy::eval {

namespace {

// Reads keys from one TOML table and rejects anything it did not consume.
class Section {
 public:
  Section(const toml::table& root, std::string name) : name_(std::move(name)) {
    if (const auto* node = root.get(name_)) {
      table_ = node->as_table();
      if (!table_) throw ConfigError("config: [" + name_ + "] must be a table");
    }
  }

  void get(const char* key, double& out) { read(key, [&](const toml::node& n) {
    if (auto v = n.value<double>()) return out = *v, true;
    return false;
  }, "a number"); }

  void get(const char* key, bool& out) { read(key, [&](const toml::node& n) {
    if (auto v = n.value_exact<bool>()) return out = *v, true;
    return false;
  }, "true or false"); }

  void get(const char* key, std::string& out) { read(key, [&](const toml::node& n) {
    if (auto v = n.value_exact<std::string>()) return out = *v, true;
    return false;
  }, "a string"); }

  void get(const char* key, std::uint64_t& out) { read(key, [&](const toml::node& n) { return unsigned_of(n, out); },
                                                       "a non-negative integer"); }

  void get(const char* key, std::vector<double>& out) { read(key, [&](const toml::node& n) {
    const auto* arr = n.as_array();
    if (!arr) return false;
    std::vector<double> v;
    for (const auto& e : *arr) {
      auto x = e.value<double>();
      if (!x) return false;
      v.push_back(*x);
    }
    return out = v, true;
  }, "an array of numbers"); }

  void get(const char* key, std::vector<std::uint64_t>& out) { read(key, [&](const toml::node& n) {
    const auto* arr = n.as_array();
    if (!arr) return false;
    std::vector<std::uint64_t> v;
    for (const auto& e : *arr) {
      std::uint64_t x;
      if (!unsigned_of(e, x)) return false;
      v.push_back(x);
    }
    return out = v, true;
  }, "an array of non-negative integers"); }

  void get(const char* key, std::optional<double>& out) {
    double v = 0;
    bool present = table_ && table_->contains(key);
    get(key, v);
    if (present) out = v;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!used_.count(std::string(k.str())))
        throw ConfigError("config: unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
  }

 private:
  template <class F>
  void read(const char* key, F&& assign, const char* expected) {
    used_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if (!assign(*node)) throw ConfigError("config: " + name_ + "." + key + " must be " + expected);
  }

  static bool unsigned_of(const toml::node& n, std::uint64_t& out) {
    auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0) return false;
    out = static_cast<std::uint64_t>(*v);
    return true;
  }

  std::string name_;
  const toml::table* table_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace

outcome::OutcomeConfig OutcomeOptions::config(std::size_t k, double beta1, double beta2, outcome::Mode mode) const {
  outcome::OutcomeConfig c;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.k = sharpness;
  c.mode = mode;
  c.panel_average = panel_average;
  if (cost_mode == CostMode::real) {
    if (k != core::kNumTests) throw ConfigError("outcome: real costs are defined for the 10 catalog tests only");
    c.alpha = outcome::OutcomeConfig::real_costs();
  } else {
    c.alpha = outcome::OutcomeConfig::uniform_costs(k);
  }
  return c;
}

void RunConfig::validate() const {
  cohort.validate();
  forecaster.validate();
  gps.validate();
  policy.validate();
  if (!(outcome.sharpness > 0)) throw ConfigError("outcome.sharpness must be positive");
  if (eval.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  const double s = eval.train_ratio + eval.val_ratio + eval.test_ratio;
  if (!(eval.train_ratio > 0) || !(eval.val_ratio > 0) || !(eval.test_ratio > 0) || std::abs(s - 1.0) > 1e-9)
    throw ConfigError("eval split ratios must be positive and sum to 1");
  if (!(eval.beta1 >= 0) || !(eval.beta2 >= 0)) throw ConfigError("eval betas must be non-negative");
  for (double p : eval.random_p)
    if (!(p >= 0 && p <= 1)) throw ConfigError("eval.random_p entries must be in [0, 1]");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["cohort"] = {{"n_stays", cohort.n_stays},
                 {"d_features", cohort.d_features},
                 {"rho", cohort.rho},
                 {"sigma_s", cohort.sigma_s},
                 {"severity_loading", cohort.severity_loading},
                 {"lab_rate", cohort.lab_rate},
                 {"treatment_rate", cohort.treatment_rate},
                 {"episode_prob", cohort.episode_prob},
                 {"q", cohort.q},
                 {"r", cohort.r},
                 {"gamma", cohort.gamma}};
  j["rules"] = {{"path", rules.path ? rules.path->string() : std::string("(built-in)")},
                {"include_predicted_future", rules.include_predicted_future},
                {"enabled", rules.enabled}};
  j["forecaster"] = {{"kind", forecaster.kind == forecast::ForecastKind::patch_mlp ? "patch_mlp" : "carry_forward"},
                     {"patch_len", forecaster.patch_len},
                     {"embed_dim", forecaster.embed_dim},
                     {"hidden", forecaster.hidden},
                     {"lr_grid", forecaster.lr_grid},
                     {"max_epochs", forecaster.max_epochs},
                     {"patience", forecaster.patience},
                     {"batch_size", forecaster.batch_size},
                     {"masked_loss", forecaster.masked_loss}};
  j["gps"] = gps.arch_json();
  j["gps"]["lr_grid"] = gps.lr_grid;
  j["gps"]["batch_size"] = gps.batch_size;
  j["gps"]["max_epochs"] = gps.max_epochs;
  j["gps"]["patience"] = gps.patience;
  j["gps"]["quantile"] = gps.quantile;
  j["policy"] = {{"lambda_init", policy.lambda_init}, {"eta_lambda", policy.eta_lambda},
                 {"lr", policy.lr},                   {"hidden", policy.hidden},
                 {"batch_size", policy.batch_size},   {"max_epochs", policy.max_epochs},
                 {"patience", policy.patience},       {"restarts", policy.restarts},
                 {"log_constraint", policy.log_constraint}};
  j["policy"]["eps_override"] = policy.eps_override ? nlohmann::json(*policy.eps_override) : nlohmann::json(nullptr);
  j["outcome"] = {{"beta1", policy.beta1},
                  {"beta2", policy.beta2},
                  {"cost_mode", outcome.cost_mode == CostMode::real ? "real" : "uniform"},
                  {"sharpness", outcome.sharpness},
                  {"panel_average", outcome.panel_average}};
  j["eval"] = {{"seeds", eval.seeds},
               {"train_ratio", eval.train_ratio},
               {"val_ratio", eval.val_ratio},
               {"test_ratio", eval.test_ratio},
               {"oracle_future", eval.oracle_future},
               {"beta1", eval.beta1},
               {"beta2", eval.beta2},
               {"random_p", eval.random_p},
               {"no_future", eval.no_future},
               {"plot_stays", eval.plot_stays}};
  return j;
}

RunConfig RunConfig::for_seed(std::uint64_t seed) const {
  RunConfig c = *this;
  c.cohort.seed = seed;
  c.forecaster.seed = numeric::derive_seed(seed, {0xF0CA});
  c.gps.seed = numeric::derive_seed(seed, {0x6105});
  c.policy.seed = numeric::derive_seed(seed, {0x9011});
  return c;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  static const std::set<std::string> known = {"cohort", "rules", "forecaster", "gps", "policy", "outcome", "eval"};
  for (const auto& [k, v] : root)
    if (!known.count(std::string(k.str()))) throw ConfigError("config: unknown section [" + std::string(k.str()) + "]");

  RunConfig c;
  {
    Section s(root, "cohort");
    s.get("n_stays", c.cohort.n_stays);
    s.get("d_features", c.cohort.d_features);
    s.get("rho", c.cohort.rho);
    s.get("sigma_s", c.cohort.sigma_s);
    s.get("severity_loading", c.cohort.severity_loading);
    s.get("lab_rate", c.cohort.lab_rate);
    s.get("treatment_rate", c.cohort.treatment_rate);
    s.get("episode_prob", c.cohort.episode_prob);
    s.get("q", c.cohort.q);
    s.get("r", c.cohort.r);
    s.get("gamma", c.cohort.gamma);
    s.finish();
  }
  {
    Section s(root, "rules");
    std::string path;
    s.get("path", path);
    if (!path.empty()) c.rules.path = base_dir / path;
    s.get("include_predicted_future", c.rules.include_predicted_future);
    s.get("enabled", c.rules.enabled);
    s.finish();
  }
  {
    Section s(root, "forecaster");
    std::string kind = "patch_mlp";
    s.get("kind", kind);
    if (kind == "patch_mlp")
      c.forecaster.kind = forecast::ForecastKind::patch_mlp;
    else if (kind == "carry_forward")
      c.forecaster.kind = forecast::ForecastKind::carry_forward;
    else
      throw ConfigError("config: forecaster.kind must be patch_mlp or carry_forward");
    s.get("patch_len", c.forecaster.patch_len);
    s.get("embed_dim", c.forecaster.embed_dim);
    s.get("hidden", c.forecaster.hidden);
    s.get("lr_grid", c.forecaster.lr_grid);
    s.get("max_epochs", c.forecaster.max_epochs);
    s.get("patience", c.forecaster.patience);
    s.get("batch_size", c.forecaster.batch_size);
    s.get("masked_loss", c.forecaster.masked_loss);
    s.finish();
  }
  {
    Section s(root, "gps");
    s.get("layers", c.gps.layers);
    s.get("bins", c.gps.bins);
    s.get("bound", c.gps.bound);
    std::vector<std::uint64_t> hidden(c.gps.context_hidden.begin(), c.gps.context_hidden.end());
    s.get("context_hidden", hidden);
    c.gps.context_hidden.assign(hidden.begin(), hidden.end());
    s.get("made_hidden", c.gps.made_hidden);
    s.get("dequant_sd", c.gps.dequant_sd);
    s.get("lr_grid", c.gps.lr_grid);
    s.get("batch_size", c.gps.batch_size);
    s.get("max_epochs", c.gps.max_epochs);
    s.get("patience", c.gps.patience);
    s.get("quantile", c.gps.quantile);
    s.finish();
  }
  {
    Section s(root, "policy");
    s.get("lambda_init", c.policy.lambda_init);
    s.get("eta_lambda", c.policy.eta_lambda);
    s.get("lr", c.policy.lr);
    std::vector<std::uint64_t> hidden(c.policy.hidden.begin(), c.policy.hidden.end());
    s.get("hidden", hidden);
    c.policy.hidden.assign(hidden.begin(), hidden.end());
    s.get("batch_size", c.policy.batch_size);
    s.get("max_epochs", c.policy.max_epochs);
    s.get("patience", c.policy.patience);
    s.get("restarts", c.policy.restarts);
    s.get("eps_override", c.policy.eps_override);
    s.get("log_constraint", c.policy.log_constraint);
    s.finish();
  }
  {
    Section s(root, "outcome");
    s.get("beta1", c.policy.beta1);
    s.get("beta2", c.policy.beta2);
    std::string mode = "uniform";
    s.get("cost_mode", mode);
    if (mode == "uniform")
      c.outcome.cost_mode = CostMode::uniform;
    else if (mode == "real")
      c.outcome.cost_mode = CostMode::real;
    else
      throw ConfigError("config: outcome.cost_mode must be uniform or real");
    s.get("sharpness", c.outcome.sharpness);
    s.get("panel_average", c.outcome.panel_average);
    s.finish();
  }
  {
    Section s(root, "eval");
    s.get("seeds", c.eval.seeds);
    s.get("train_ratio", c.eval.train_ratio);
    s.get("val_ratio", c.eval.val_ratio);
    s.get("test_ratio", c.eval.test_ratio);
    s.get("oracle_future", c.eval.oracle_future);
    s.get("beta1", c.eval.beta1);
    s.get("beta2", c.eval.beta2);
    s.get("random_p", c.eval.random_p);
    s.get("no_future", c.eval.no_future);
    s.get("plot_stays", c.eval.plot_stays);
    s.finish();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace labpolicy::eval
