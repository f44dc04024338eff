#pragma once

#include <cstdint>

#include "labpolicy/numeric/params.hpp"

namespace labpolicy::numeric {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  ParamSet m;
  ParamSet v;

  static AdamState for_params(const ParamSet& params);
};

// One bias-corrected Adam update, in place. Shapes of state, params and grads
// must agree.
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, double lr);

}  // namespace labpolicy::numeric
