#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "labpolicy/numeric/params.hpp"

namespace labpolicy::numeric {

// Builds a 1×1 loss on the tape from bound parameters.
using LossBuilder = std::function<Var(Tape&, const BoundParams&)>;

double eval_loss(const LossBuilder& loss, const ParamSet& params);
// Reverse-mode gradient of the loss; optionally reports the loss value.
ParamSet grad(const LossBuilder& loss, const ParamSet& params, double* loss_value = nullptr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  // Coordinates skipped because the loss has a kink (ReLU) within ±h.
  std::size_t skipped = 0;
};

// Central differences on up to max_probes coordinates sampled with `seed`.
// rel = |analytic − fd| / max(|analytic|, |fd|, 1e-6).
GradCheckResult finite_diff_check(const LossBuilder& loss, const ParamSet& params, double h = 1e-5,
                                  std::uint64_t seed = 0, std::size_t max_probes = 64);

}  // namespace labpolicy::numeric
