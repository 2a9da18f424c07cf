#pragma once

#include <string>
#include <vector>

#include "cascade/model.hpp"

namespace cascade {

struct GroupCheck {
  std::string loss;   // "joint" | "cross_entropy"
  std::string group;  // module name
  double max_rel_error = 0.0;
  std::int64_t entries = 0;
};

struct ModelGradCheckReport {
  std::vector<GroupCheck> checks;
  double worst = 0.0;
};

// Finite-difference validation of the whole architecture on a random batch:
// the joint self-supervised loss against every SSL parameter group, and the
// classifier cross-entropy (through the full prediction path) against the
// encoder and classifier groups. Augmented views are drawn once and held
// fixed so the loss is deterministic.
ModelGradCheckReport run_model_gradcheck(const ModelGeometry& geometry, int batch, double h, int samples_per_tensor,
                                         std::uint64_t seed, double lambda = 0.1, double tau = 0.07);

}  // namespace cascade
