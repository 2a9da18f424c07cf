#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

class Var;
using VarPtr = std::shared_ptr<Var>;

// One node of the recorded forward computation. Gradients of a scalar loss
// are accumulated into `grad` by backward().
class Var {
 public:
  Tensor value;
  Tensor grad;  // same shape as value once touched; empty until then
  bool requires_grad = false;

  std::vector<VarPtr> parents;
  std::function<void(Var&)> backprop;  // pushes this->grad into parents
  std::int64_t id = 0;

  bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }
  void ensure_grad();
  void zero_grad();
};

VarPtr make_leaf(Tensor value, bool requires_grad);
inline VarPtr make_param(Tensor value) { return make_leaf(std::move(value), true); }
inline VarPtr make_const(Tensor value) { return make_leaf(std::move(value), false); }

// Runs reverse-mode accumulation from a scalar loss node.
void backward(const VarPtr& loss);

// --- elementwise & linear algebra -----------------------------------------
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr mul(const VarPtr& a, const VarPtr& b);
VarPtr scale(const VarPtr& a, double c);
VarPtr add_const(const VarPtr& a, const Tensor& c);
VarPtr matmul(const VarPtr& a, const VarPtr& b);  // [n,k] x [k,m]
VarPtr transpose(const VarPtr& a);                // 2-D only
VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& b);  // last axis D_in -> D_out
VarPtr relu(const VarPtr& x);
VarPtr leaky_relu(const VarPtr& x, double slope);

// --- convolution / pooling -------------------------------------------------
// Depthwise 1-D convolution: x is [C,T] or [N,C,T], w is [C,K], b is [C].
VarPtr conv1d_depthwise(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int padding);
// General 2-D convolution: x is [F_in,H,W] or [N,F_in,H,W], w is [F_out,F_in,Kh,Kw], b is [F_out].
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, std::pair<int, int> stride,
              std::pair<int, int> padding);
VarPtr avg_pool2d(const VarPtr& x, std::pair<int, int> kernel, std::pair<int, int> stride);

// --- normalization ----------------------------------------------------------
// Train mode normalizes x ([N,D], N >= 2) by batch statistics and updates the
// running buffers in place with `momentum`. Eval mode uses the running stats.
VarPtr batch_norm_train(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, Tensor& running_mean,
                        Tensor& running_var, double momentum, double eps);
VarPtr batch_norm_eval(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps);

// --- shape ops ---------------------------------------------------------------
VarPtr concat(const std::vector<VarPtr>& xs, int axis);
VarPtr reshape(const VarPtr& x, std::vector<int> shape);
VarPtr flatten_rows(const VarPtr& x);  // [N,...] -> [N,D]

// Rows scaled to unit Euclidean norm; zero rows pass through unchanged and
// set *zero_row_flag when provided.
VarPtr l2_normalize_rows(const VarPtr& x, bool* zero_row_flag = nullptr);

// [N,D],[N,D] -> [2N,D] with a_k at row 2k and b_k at row 2k+1.
VarPtr interleave_rows(const VarPtr& a, const VarPtr& b);

VarPtr row_logsumexp(const VarPtr& x);  // [N,M] -> [N]
VarPtr sum_all(const VarPtr& x);        // -> scalar [1]

// Mean over the batch of -log softmax(logits)[label]. labels in {0..classes-1}.
VarPtr cross_entropy_with_labels(const VarPtr& logits, const std::vector<int>& labels);

}  // namespace cascade
