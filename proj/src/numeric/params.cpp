#include "labpolicy/numeric/params.hpp"

#include <cmath>

#include "labpolicy/error.hpp"

namespace labpolicy::numeric {

void ParamSet::add(std::string name, Matrix value) {
  if (contains(name)) throw NumericError("ParamSet: duplicate parameter '" + name + "'");
  entries_.push_back(Entry{std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

Matrix& ParamSet::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw NumericError("ParamSet: no parameter '" + std::string(name) + "'");
}

const Matrix& ParamSet::at(std::string_view name) const { return const_cast<ParamSet*>(this)->at(name); }

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.all_finite()) return false;
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  z.seed = seed;
  for (const auto& e : entries_) z.add(e.name, Matrix(e.value.rows, e.value.cols, 0.0));
  return z;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape), params_(&params) {
  vars_.reserve(params.entries().size());
  for (const auto& e : params.entries()) vars_.push_back(tape.leaf(e.value, trainable));
}

Var BoundParams::operator[](std::string_view name) const {
  const auto& es = params_->entries();
  for (std::size_t i = 0; i < es.size(); ++i)
    if (es[i].name == name) return vars_[i];
  throw NumericError("BoundParams: no parameter '" + std::string(name) + "'");
}

ParamSet BoundParams::gradients() const {
  ParamSet g = params_->zeros_like();
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (tape_->has_grad(vars_[i].id)) g.entries()[i].value = tape_->grad(vars_[i].id);
  return g;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix w(fan_in, fan_out);
  for (double& v : w.data) v = u(rng);
  return w;
}

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& e : params.entries()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < e.value.rows; ++i) {
      const auto r = e.value.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    out[e.name] = std::move(rows);
  }
  return out;
}

ParamSet params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("params: expected an object of named matrices");
  ParamSet p;
  for (const auto& [name, rows] : j.items()) {
    if (!rows.is_array() || rows.empty()) throw DataError("params: '" + name + "' must be a non-empty nested array");
    const std::size_t r = rows.size();
    const std::size_t c = rows.front().size();
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw DataError("params: ragged matrix '" + name + "'");
      for (std::size_t k = 0; k < c; ++k) m(i, k) = rows[i][k].get<double>();
    }
    p.add(name, std::move(m));
  }
  return p;
}

nlohmann::json model_to_json(const nlohmann::json& arch, const ParamSet& params) {
  nlohmann::json j = nlohmann::json::object();
  j["arch"] = arch;
  j["seed"] = params.seed;
  j["params"] = params_to_json(params);
  return j;
}

ParamSet model_from_json(const nlohmann::json& j, nlohmann::json* arch) {
  try {
    ParamSet p = params_from_json(j.at("params"));
    p.seed = j.at("seed").get<std::uint64_t>();
    if (arch) *arch = j.at("arch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace labpolicy::numeric
