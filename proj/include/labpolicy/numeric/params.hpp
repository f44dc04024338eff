#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "labpolicy/numeric/matrix.hpp"
#include "labpolicy/numeric/rng.hpp"
#include "labpolicy/numeric/tape.hpp"

namespace labpolicy::numeric {

// Named tensors in insertion order. Names are unique.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
  };

  std::uint64_t seed = 0;

  void add(std::string name, Matrix value);
  bool contains(std::string_view name) const;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t total_size() const;
  bool all_finite() const;
  ParamSet zeros_like() const;

 private:
  std::vector<Entry> entries_;
};

// Tape leaves for every parameter of a set.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamSet& params, bool trainable);

  Var operator[](std::string_view name) const;
  // Accumulated gradients after Tape::backward (zeros where none reached).
  ParamSet gradients() const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  std::vector<Var> vars_;
};

// Glorot-uniform weights a = sqrt(6/(fan_in+fan_out)).
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

// {"arch": ..., "seed": ..., "params": {...}}
nlohmann::json model_to_json(const nlohmann::json& arch, const ParamSet& params);
// Returns the params; the arch object is written to *arch when given.
ParamSet model_from_json(const nlohmann::json& j, nlohmann::json* arch = nullptr);

}  // namespace labpolicy::numeric
