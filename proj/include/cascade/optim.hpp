#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/autodiff.hpp"

namespace cascade {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameters plus their Adam moment buffers. The step counter is shared
// across the group and advances once per adam_step call.
class ParameterGroup {
 public:
  struct Slot {
    std::string name;
    VarPtr var;
    Tensor m;  // first moment
    Tensor v;  // second moment
  };

  void add(const std::string& name, const VarPtr& var);
  void merge(const ParameterGroup& other);  // shares the Vars, fresh moments

  VarPtr get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return slots_.size(); }
  std::int64_t param_count() const;
  std::int64_t steps() const { return steps_; }

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

  void zero_grads();

  friend void adam_step(ParameterGroup& group, const AdamHyper& hyper);

 private:
  std::vector<Slot> slots_;  // insertion order, deterministic iteration
  std::int64_t steps_ = 0;
};

// One bias-corrected Adam update over every parameter in the group.
// Throws OptimizerError if any parameter is missing its gradient.
void adam_step(ParameterGroup& group, const AdamHyper& hyper);

}  // namespace cascade
