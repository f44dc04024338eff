#include "labpolicy/numeric/optim.hpp"

#include <cmath>

#include "labpolicy/error.hpp"

namespace labpolicy::numeric {

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, double lr) {
  auto& pe = params.entries();
  const auto& ge = grads.entries();
  auto& me = state.m.entries();
  auto& ve = state.v.entries();
  if (pe.size() != ge.size() || pe.size() != me.size() || pe.size() != ve.size())
    throw NumericError("adam_step: parameter/gradient/state count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t e = 0; e < pe.size(); ++e) {
    Matrix& p = pe[e].value;
    const Matrix& g = ge[e].value;
    Matrix& m = me[e].value;
    Matrix& v = ve[e].value;
    if (!p.same_shape(g) || !p.same_shape(m) || !p.same_shape(v))
      throw NumericError("adam_step: shape mismatch for '" + pe[e].name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace labpolicy::numeric
