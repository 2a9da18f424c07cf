#include "cascade/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cascade/error.hpp"

namespace cascade {

GradCheckResult grad_check(const std::function<VarPtr()>& loss_fn, ParameterGroup& group,
                           const GradCheckOptions& options) {
  auto loss = loss_fn();
  {
    auto replay = loss_fn();
    if (replay->value[0] != loss->value[0]) {
      throw CheckInvalidError("grad_check: loss is not deterministic under fixed parameters");
    }
  }
  group.zero_grads();
  backward(loss);

  // Snapshot analytic gradients before perturbing anything.
  std::vector<Tensor> grads;
  grads.reserve(group.slots().size());
  for (auto& s : group.slots()) {
    s.var->ensure_grad();
    grads.push_back(s.var->grad);
  }

  std::mt19937_64 rng(options.rng_seed);
  GradCheckResult result;
  for (std::size_t si = 0; si < group.slots().size(); ++si) {
    auto& slot = group.slots()[si];
    const std::int64_t n = slot.var->value.size();
    std::vector<std::int64_t> indices;
    if (options.samples_per_tensor <= 0 || options.samples_per_tensor >= n) {
      indices.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
    } else {
      std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
      for (int i = 0; i < options.samples_per_tensor; ++i) indices.push_back(dist(rng));
      std::sort(indices.begin(), indices.end());
      indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    }
    for (std::int64_t idx : indices) {
      double& p = slot.var->value[idx];
      const double saved = p;
      p = saved + options.h;
      const double fplus = loss_fn()->value[0];
      p = saved - options.h;
      const double fminus = loss_fn()->value[0];
      p = saved;
      const double fd = (fplus - fminus) / (2.0 * options.h);
      const double g = grads[si][idx];
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
      const double rel = std::abs(fd - g) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = slot.name;
        result.worst_index = idx;
      }
    }
  }
  group.zero_grads();
  return result;
}

}  // namespace cascade
