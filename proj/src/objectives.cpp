#include "cascade/objectives.hpp"

#include "cascade/error.hpp"

namespace cascade {

VarPtr recon_loss(const VarPtr& reconstructed, const VarPtr& target) {
  if (!reconstructed->value.same_shape(target->value)) {
    throw DimensionError("recon_loss: shape mismatch " + reconstructed->value.shape_str() + " vs " +
                         target->value.shape_str());
  }
  if (reconstructed->value.rank() < 1 || reconstructed->value.dim(0) == 0) {
    throw DimensionError("recon_loss: empty batch");
  }
  const int n = reconstructed->value.dim(0);
  auto diff = sub(reconstructed, target);
  return scale(sum_all(mul(diff, diff)), 1.0 / n);
}

VarPtr ntxent_loss(const VarPtr& z, const VarPtr& z_tilde, double tau, bool mean_per_anchor) {
  if (tau <= 0.0) throw ConfigError("ntxent_loss: tau must be positive");
  if (z->value.rank() != 2 || !z->value.same_shape(z_tilde->value)) {
    throw DimensionError("ntxent_loss: views must share an [N,D] shape");
  }
  const int n = z->value.dim(0);
  if (n == 0) throw DimensionError("ntxent_loss: empty batch");

  auto u = interleave_rows(l2_normalize_rows(z), l2_normalize_rows(z_tilde));  // [2N,D]
  auto sims = scale(matmul(u, transpose(u)), 1.0 / tau);                       // [2N,2N]

  const int m = 2 * n;
  // Self-similarities are pushed far below every real similarity so they
  // vanish from the log-sum-exp denominator (A(i) = {a != i}).
  Tensor diag_mask({m, m});
  Tensor pos_mask({m, m});
  for (int i = 0; i < m; ++i) {
    diag_mask[static_cast<std::int64_t>(i) * m + i] = -1e9;
    const int p = (i % 2 == 0) ? i + 1 : i - 1;
    pos_mask[static_cast<std::int64_t>(i) * m + p] = 1.0;
  }
  auto masked = add_const(sims, diag_mask);
  auto denom = sum_all(row_logsumexp(masked));          // sum_i log sum_{a != i} exp(s_ia / tau)
  auto positive = sum_all(mul(masked, make_const(pos_mask)));  // sum_i s_{i,p(i)} / tau
  auto loss = sub(denom, positive);
  return mean_per_anchor ? scale(loss, 1.0 / m) : loss;
}

VarPtr joint_loss(const VarPtr& l_con_t, const VarPtr& l_con_f, const VarPtr& l_recon, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("joint_loss: lambda must be in [0,1]");
  return add(scale(add(l_con_t, l_con_f), lambda), scale(l_recon, 1.0 - lambda));
}

double joint_loss_value(double l_con_t, double l_con_f, double l_recon, double lambda) {
  return lambda * (l_con_t + l_con_f) + (1.0 - lambda) * l_recon;
}

VarPtr cross_entropy(const VarPtr& logits, const std::vector<int>& labels) {
  return cross_entropy_with_labels(logits, labels);
}

}  // namespace cascade
