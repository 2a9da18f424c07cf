#include "cascade/optim.hpp"

#include <cmath>

#include "cascade/error.hpp"

namespace cascade {

void ParameterGroup::add(const std::string& name, const VarPtr& var) {
  if (contains(name)) throw OptimizerError("duplicate parameter name: " + name);
  Slot slot;
  slot.name = name;
  slot.var = var;
  slot.m = Tensor(var->value.shape());
  slot.v = Tensor(var->value.shape());
  slots_.push_back(std::move(slot));
}

void ParameterGroup::merge(const ParameterGroup& other) {
  for (const auto& s : other.slots_) add(s.name, s.var);
}

VarPtr ParameterGroup::get(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s.var;
  }
  throw OptimizerError("unknown parameter: " + name);
}

bool ParameterGroup::contains(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return true;
  }
  return false;
}

std::int64_t ParameterGroup::param_count() const {
  std::int64_t n = 0;
  for (const auto& s : slots_) n += s.var->value.size();
  return n;
}

void ParameterGroup::zero_grads() {
  for (auto& s : slots_) s.var->zero_grad();
}

void adam_step(ParameterGroup& group, const AdamHyper& hyper) {
  for (const auto& s : group.slots_) {
    if (!s.var->has_grad()) throw OptimizerError("adam_step: missing gradient for parameter " + s.name);
  }
  const std::int64_t t = ++group.steps_;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (auto& s : group.slots_) {
    const std::int64_t n = s.var->value.size();
    double* theta = s.var->value.data();
    const double* g = s.var->grad.data();
    double* m = s.m.data();
    double* v = s.v.data();
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

}  // namespace cascade
