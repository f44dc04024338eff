#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "labpolicy/numeric/ops.hpp"
#include "labpolicy/numeric/params.hpp"

namespace labpolicy::numeric {

enum class Activation { relu, tanh, sigmoid, softplus };

Activation activation_from_string(std::string_view s);
std::string_view to_string(Activation a);

// input → hidden... (affine + activation) → output (affine only).
struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;
  Activation activation = Activation::relu;

  std::size_t layers() const { return hidden.size() + 1; }
  nlohmann::json to_json() const;
  static MlpSpec from_json(const nlohmann::json& j);
};

// Adds "<prefix>.w<i>" (in×out) and "<prefix>.b<i>" (1×out) for each layer.
void init_mlp(ParamSet& params, std::string_view prefix, const MlpSpec& spec, Rng& rng);

Var apply_activation(Var x, Activation a);
Var mlp_forward(const BoundParams& params, std::string_view prefix, const MlpSpec& spec, Var input);

// Batch evaluation without gradient tracking; rows of `input` are samples.
Matrix mlp_apply(const ParamSet& params, std::string_view prefix, const MlpSpec& spec, const Matrix& input);

}  // namespace labpolicy::numeric
