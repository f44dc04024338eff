#include "labpolicy/numeric/mlp.hpp"

#include "labpolicy/error.hpp"

namespace labpolicy::numeric {
namespace {
std::string layer_name(std::string_view prefix, char kind, std::size_t i) {
  return std::string(prefix) + "." + kind + std::to_string(i);
}
}  // namespace

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softplus") return Activation::softplus;
  throw NumericError("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::softplus:
      return "softplus";
  }
  return "relu";
}

nlohmann::json MlpSpec::to_json() const {
  return {{"input", input}, {"hidden", hidden}, {"output", output}, {"activation", std::string(to_string(activation))}};
}

MlpSpec MlpSpec::from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input = j.at("input").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.output = j.at("output").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return s;
}

void init_mlp(ParamSet& params, std::string_view prefix, const MlpSpec& spec, Rng& rng) {
  std::size_t fan_in = spec.input;
  for (std::size_t i = 0; i < spec.layers(); ++i) {
    const std::size_t fan_out = i < spec.hidden.size() ? spec.hidden[i] : spec.output;
    params.add(layer_name(prefix, 'w', i), glorot_uniform(fan_in, fan_out, rng));
    params.add(layer_name(prefix, 'b', i), Matrix(1, fan_out, 0.0));
    fan_in = fan_out;
  }
}

Var apply_activation(Var x, Activation a) {
  switch (a) {
    case Activation::relu:
      return ops::relu(x);
    case Activation::tanh:
      return ops::tanh(x);
    case Activation::sigmoid:
      return ops::sigmoid(x);
    case Activation::softplus:
      return ops::softplus(x);
  }
  return x;
}

Var mlp_forward(const BoundParams& params, std::string_view prefix, const MlpSpec& spec, Var input) {
  if (input.cols() != spec.input)
    throw NumericError("mlp '" + std::string(prefix) + "': expected input width " + std::to_string(spec.input) +
                       ", got " + std::to_string(input.cols()));
  Var h = input;
  for (std::size_t i = 0; i < spec.layers(); ++i) {
    h = ops::linear(h, params[layer_name(prefix, 'w', i)], params[layer_name(prefix, 'b', i)]);
    if (i + 1 < spec.layers()) h = apply_activation(h, spec.activation);
  }
  return h;
}

Matrix mlp_apply(const ParamSet& params, std::string_view prefix, const MlpSpec& spec, const Matrix& input) {
  Tape tape;
  BoundParams bound(tape, params, false);
  return mlp_forward(bound, prefix, spec, tape.constant(input)).value();
}

}  // namespace labpolicy::numeric
