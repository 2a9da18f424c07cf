#pragma once

#include "cascade/autodiff.hpp"

namespace cascade {

// Per-step loss values as logged to the training log.
struct LossReport {
  double l_recon = 0.0;
  double l_con_t = 0.0;
  double l_con_f = 0.0;
  double l_con_t_mean = 0.0;  // per-anchor mean variants, logged alongside
  double l_con_f_mean = 0.0;
  double joint = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  int batch_size = 0;
};

// Mean over the batch of squared Frobenius distance per sample (no division
// by C*T): (1/N) * sum_i ||a_i - b_i||^2.
VarPtr recon_loss(const VarPtr& reconstructed, const VarPtr& target);

// Normalized temperature-scaled cross entropy over the 2N interleaved views
// of z (rows 2k) and z_tilde (rows 2k+1); positives sit at adjacent indices.
// Rows are L2-normalized before the dot products. Returned as the sum over
// all 2N anchors; `mean_per_anchor` divides by 2N instead.
VarPtr ntxent_loss(const VarPtr& z, const VarPtr& z_tilde, double tau, bool mean_per_anchor = false);

// joint = lambda * (l_con_t + l_con_f) + (1 - lambda) * l_recon
VarPtr joint_loss(const VarPtr& l_con_t, const VarPtr& l_con_f, const VarPtr& l_recon, double lambda);
double joint_loss_value(double l_con_t, double l_con_f, double l_recon, double lambda);

// Mean over the batch of -log softmax(logits)[label].
VarPtr cross_entropy(const VarPtr& logits, const std::vector<int>& labels);

}  // namespace cascade
