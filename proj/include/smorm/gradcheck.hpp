#pragma once

#include <cstddef>
#include <functional>

#include "smorm/autodiff.hpp"
#include "smorm/rng.hpp"

namespace smorm {

// Builds a scalar loss on the tape from bound parameters. The input batch is
// captured by the closure.
using LossBuilder = std::function<ad::Var(ad::Tape&, const ad::BoundParams&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose ±eps perturbation flipped a relu/min/clamp branch; the
  // loss is not differentiable across the flip, so they are excluded.
  std::size_t skipped_kinks = 0;
};

// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor);
// keeps near-zero gradients from turning round-off into huge ratios.
inline constexpr double kGradCheckFloor = 1e-2;

// Central differences against reverse mode. Parameter sets larger than
// `max_coords` are checked on a random subsample of max(200, max_coords)
// coordinates.
GradCheckResult grad_check(const LossBuilder& loss, ad::ParamStore params, double eps, Rng& rng,
                           std::size_t max_coords = 400);

}  // namespace smorm
