#pragma once

#include <functional>
#include <random>
#include <string>

#include "cascade/optim.hpp"

namespace cascade {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  std::int64_t entries_checked = 0;
};

struct GradCheckOptions {
  double h = 1e-5;
  // Entries probed per parameter tensor; <= 0 probes every entry.
  int samples_per_tensor = 0;
  std::uint64_t rng_seed = 0;
};

// Central finite differences (f(p+h) - f(p-h)) / 2h against backward-pass
// gradients for the parameters in `group`. `loss_fn` must rebuild the forward
// graph from the current parameter values and be deterministic; a
// non-reproducible loss raises CheckInvalidError.
//
// Relative error uses denominator max(|fd|, |grad|, 1e-3) so near-zero
// gradients are judged on an absolute scale.
GradCheckResult grad_check(const std::function<VarPtr()>& loss_fn, ParameterGroup& group,
                           const GradCheckOptions& options = {});

}  // namespace cascade
