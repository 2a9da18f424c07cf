#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cascade/autodiff.hpp"
#include "cascade/error.hpp"
#include "cascade/gradcheck.hpp"
#include "cascade/optim.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {

// Gradient check of a single primitive: builds loss = sum(op(x)^2) so every
// output element contributes, and compares against finite differences.
double primitive_grad_error(const std::function<VarPtr(const VarPtr&)>& op, const Tensor& x0) {
  auto x = make_param(x0);
  ParameterGroup g;
  g.add("x", x);
  auto loss_fn = [&]() { return sum_all(mul(op(x), op(x))); };
  return grad_check(loss_fn, g, {1e-5, 0, 42}).max_rel_error;
}

}  // namespace

TEST_CASE("conv1d_depthwise identity kernel") {
  auto x = make_const(Tensor({1, 5}, {1, 2, 3, 4, 5}));
  auto w = make_const(Tensor({1, 1}, {1}));
  auto b = make_const(Tensor({1}, {0}));
  auto y = conv1d_depthwise(x, w, b, 1, 0);
  for (int i = 0; i < 5; ++i) CHECK(y->value[i] == doctest::Approx(i + 1));
}

TEST_CASE("conv1d_depthwise preserves length with K=25 P=12 S=1") {
  std::mt19937_64 rng(1);
  auto x = make_const(oracles::random_tensor({2, 8}, rng));
  auto w = make_const(oracles::random_tensor({2, 25}, rng));
  auto b = make_const(oracles::random_tensor({2}, rng));
  auto y = conv1d_depthwise(x, w, b, 1, 12);
  CHECK(y->value.shape() == std::vector<int>{2, 8});
}

TEST_CASE("conv1d_depthwise matches the sliding-window oracle") {
  std::mt19937_64 rng(2);
  auto x = oracles::random_tensor({1, 3, 16}, rng);
  auto w = oracles::random_tensor({3, 5}, rng);
  auto b = oracles::random_tensor({3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 2}) {
      auto got = conv1d_depthwise(make_const(x), make_const(w), make_const(b), stride, pad);
      auto want = oracles::conv1d_depthwise(x, w, b, stride, pad);
      CHECK(got->value.shape() == want.shape());
      CHECK(oracles::max_abs_diff(got->value, want) < 1e-10);
    }
  }
}

TEST_CASE("conv1d_depthwise channel locality") {
  std::mt19937_64 rng(3);
  auto x0 = oracles::random_tensor({4, 32}, rng);
  auto w = make_const(oracles::random_tensor({4, 5}, rng));
  auto b = make_const(oracles::random_tensor({4}, rng));
  auto base = conv1d_depthwise(make_const(x0), w, b, 1, 2)->value;
  Tensor x1 = x0;
  x1[static_cast<std::int64_t>(2) * 32 + 7] += 1.0;  // perturb channel 2 only
  auto bumped = conv1d_depthwise(make_const(x1), w, b, 1, 2)->value;
  for (int c = 0; c < 4; ++c) {
    double diff = 0.0;
    for (int t = 0; t < 32; ++t) {
      diff = std::max(diff, std::abs(bumped[static_cast<std::int64_t>(c) * 32 + t] -
                                     base[static_cast<std::int64_t>(c) * 32 + t]));
    }
    if (c == 2) {
      CHECK(diff > 0.0);
    } else {
      CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("conv1d_depthwise rejects bad shapes") {
  auto x = make_const(Tensor({2, 8}));
  auto w = make_const(Tensor({3, 3}));
  auto b = make_const(Tensor({3}));
  CHECK_THROWS_AS(conv1d_depthwise(x, w, b, 1, 1), DimensionError);
}

TEST_CASE("conv2d 1x1 identity") {
  std::mt19937_64 rng(4);
  auto x = oracles::random_tensor({1, 1, 3, 4}, rng);
  auto w = make_const(Tensor({1, 1, 1, 1}, {1}));
  auto b = make_const(Tensor({1}, {0}));
  auto y = conv2d(make_const(x), w, b, {1, 1}, {0, 0});
  CHECK(oracles::max_abs_diff(y->value, x) == 0.0);
}

TEST_CASE("conv2d width preserved by kernel (1,49) pad (0,24)") {
  std::mt19937_64 rng(5);
  auto x = make_const(oracles::random_tensor({1, 1, 6, 40}, rng));
  auto w = make_const(oracles::random_tensor({3, 1, 1, 49}, rng, 0.1));
  auto b = make_const(Tensor({3}));
  auto y = conv2d(x, w, b, {1, 1}, {0, 24});
  CHECK(y->value.shape() == std::vector<int>{1, 3, 6, 40});
}

TEST_CASE("conv2d hemisphere geometry (C/2,1) stride (C/2,1) gives height 2") {
  std::mt19937_64 rng(6);
  const int c = 6;
  auto x = oracles::random_tensor({2, 3, c, 10}, rng);
  auto w = oracles::random_tensor({3, 3, c / 2, 1}, rng);
  auto b = oracles::random_tensor({3}, rng);
  auto got = conv2d(make_const(x), make_const(w), make_const(b), {c / 2, 1}, {0, 0});
  CHECK(got->value.dim(2) == 2);
  auto want = oracles::conv2d(x, w, b, c / 2, 1, 0, 0);
  CHECK(oracles::max_abs_diff(got->value, want) < 1e-10);
}

TEST_CASE("conv2d matches the direct oracle") {
  std::mt19937_64 rng(7);
  auto x = oracles::random_tensor({2, 3, 7, 9}, rng);
  auto w = oracles::random_tensor({4, 3, 3, 3}, rng);
  auto b = oracles::random_tensor({4}, rng);
  for (auto [sh, sw, ph, pw] : {std::array<int, 4>{1, 1, 1, 1}, {2, 1, 0, 2}, {1, 3, 2, 0}}) {
    auto got = conv2d(make_const(x), make_const(w), make_const(b), {sh, sw}, {ph, pw});
    auto want = oracles::conv2d(x, w, b, sh, sw, ph, pw);
    CHECK(got->value.shape() == want.shape());
    CHECK(oracles::max_abs_diff(got->value, want) < 1e-10);
  }
}

TEST_CASE("conv2d rejects non-positive output") {
  auto x = make_const(Tensor({1, 2, 2}));
  auto w = make_const(Tensor({1, 1, 5, 1}));
  auto b = make_const(Tensor({1}));
  CHECK_THROWS_AS(conv2d(x, w, b, {1, 1}, {0, 0}), DimensionError);
}

TEST_CASE("linear identity and hand example") {
  auto x = make_const(Tensor({2}, {1, 2}));
  auto w_id = make_const(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b0 = make_const(Tensor({2}));
  auto y = linear(x, w_id, b0);
  CHECK(y->value[0] == 1.0);
  CHECK(y->value[1] == 2.0);

  auto w = make_const(Tensor({2, 2}, {1, 0, 0, 2}));
  auto b = make_const(Tensor({2}, {0, 1}));
  auto z = linear(x, w, b);
  CHECK(z->value[0] == doctest::Approx(1.0));
  CHECK(z->value[1] == doctest::Approx(5.0));
}

TEST_CASE("linear matches matmul oracle on random 4x8") {
  std::mt19937_64 rng(8);
  auto x = oracles::random_tensor({4, 8}, rng);
  auto w = oracles::random_tensor({8, 5}, rng);
  auto b = Tensor({5});
  auto got = linear(make_const(x), make_const(w), make_const(b));
  auto want = oracles::matmul(x, w);
  CHECK(oracles::max_abs_diff(got->value, want) < 1e-10);
}

TEST_CASE("leaky_relu values and gradient") {
  auto x = make_param(Tensor({3}, {0.0, -1.0, 2.0}));
  auto y = leaky_relu(x, 0.01);
  CHECK(y->value[0] == 0.0);
  CHECK(y->value[1] == doctest::Approx(-0.01));
  CHECK(y->value[2] == 2.0);
  backward(sum_all(y));
  CHECK(x->grad[1] == doctest::Approx(0.01));
  CHECK(x->grad[2] == doctest::Approx(1.0));
}

TEST_CASE("avg_pool2d examples and oracle") {
  auto x = make_const(Tensor({1, 1, 8}, {1, 2, 3, 4, 5, 6, 7, 8}));
  auto y = avg_pool2d(x, {1, 4}, {1, 4});
  CHECK(y->value[0] == doctest::Approx(2.5));
  CHECK(y->value[1] == doctest::Approx(6.5));

  auto c = avg_pool2d(make_const(Tensor::full({2, 1, 12}, 3.25)), {1, 4}, {1, 4});
  for (std::int64_t i = 0; i < c->value.size(); ++i) CHECK(c->value[i] == doctest::Approx(3.25));

  std::mt19937_64 rng(9);
  auto r = oracles::random_tensor({2, 3, 4, 12}, rng);
  auto got = avg_pool2d(make_const(r), {2, 3}, {2, 3});
  auto want = oracles::avg_pool2d(r, 2, 3, 2, 3);
  CHECK(oracles::max_abs_diff(got->value, want) < 1e-12);

  CHECK_THROWS_AS(avg_pool2d(make_const(Tensor({1, 1, 3})), {1, 4}, {1, 4}), DimensionError);
}

TEST_CASE("batch_norm train statistics") {
  auto gamma = make_const(Tensor::full({1}, 1.0));
  auto beta = make_const(Tensor({1}));
  Tensor rm({1}), rv = Tensor::full({1}, 1.0);

  // zero-variance batch collapses to zero output
  auto xz = make_const(Tensor({3, 1}, {2.0, 2.0, 2.0}));
  auto yz = batch_norm_train(xz, gamma, beta, rm, rv, 0.1, 1e-5);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(yz->value[i]) < 1e-9);

  // column [1,3] normalizes to [-1,1] up to eps
  auto x2 = make_const(Tensor({2, 1}, {1.0, 3.0}));
  auto y2 = batch_norm_train(x2, gamma, beta, rm, rv, 0.1, 1e-5);
  CHECK(y2->value[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y2->value[1] == doctest::Approx(1.0).epsilon(1e-4));

  // batch mean ~ beta, batch std ~ gamma on random input
  std::mt19937_64 rng(10);
  auto x = make_const(oracles::random_tensor({64, 3}, rng, 2.0));
  auto g2 = make_const(Tensor({3}, {1.5, 0.5, 2.0}));
  auto b2 = make_const(Tensor({3}, {0.3, -0.2, 1.0}));
  Tensor rm2({3}), rv2 = Tensor::full({3}, 1.0);
  auto y = batch_norm_train(x, g2, b2, rm2, rv2, 0.1, 1e-8);
  for (int j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (int i = 0; i < 64; ++i) mean += y->value[static_cast<std::int64_t>(i) * 3 + j];
    mean /= 64;
    double var = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double d = y->value[static_cast<std::int64_t>(i) * 3 + j] - mean;
      var += d * d;
    }
    CHECK(mean == doctest::Approx(b2->value[j]).epsilon(1e-6));
    CHECK(std::sqrt(var / 64) == doctest::Approx(std::abs(g2->value[j])).epsilon(1e-6));
  }

  CHECK_THROWS_AS(batch_norm_train(make_const(Tensor({1, 2})), make_const(Tensor({2})), make_const(Tensor({2})), rm2,
                                   rv2, 0.1, 1e-5),
                  DegenerateBatchError);
}

TEST_CASE("concat flatten l2_normalize") {
  std::mt19937_64 rng(11);
  auto a = make_const(oracles::random_tensor({16, 1, 7}, rng));
  auto b = make_const(oracles::random_tensor({16, 2, 7}, rng));
  auto cat = concat({a, b}, 1);
  CHECK(cat->value.shape() == std::vector<int>{16, 3, 7});

  auto f = reshape(make_const(Tensor({2, 3}, {1, 2, 3, 4, 5, 6})), {1, 6});
  for (int i = 0; i < 6; ++i) CHECK(f->value[i] == doctest::Approx(i + 1));

  bool zero_flag = false;
  auto n = l2_normalize_rows(make_const(Tensor({2, 2}, {3, 4, 0, 0})), &zero_flag);
  CHECK(n->value[0] == doctest::Approx(0.6));
  CHECK(n->value[1] == doctest::Approx(0.8));
  CHECK(n->value[2] == 0.0);
  CHECK(zero_flag);

  CHECK_THROWS_AS(concat({a, make_const(Tensor({15, 2, 7}))}, 1), DimensionError);
}

TEST_CASE("linearity of conv and linear with zero bias") {
  std::mt19937_64 rng(12);
  auto w1 = make_const(oracles::random_tensor({3, 5}, rng));
  auto b0 = make_const(Tensor({3}));
  auto x1 = oracles::random_tensor({3, 20}, rng);
  auto x2 = oracles::random_tensor({3, 20}, rng);
  const double alpha = 1.7, beta = -0.6;
  Tensor mix({3, 20});
  for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = alpha * x1[i] + beta * x2[i];
  auto lhs = conv1d_depthwise(make_const(mix), w1, b0, 1, 2)->value;
  auto y1 = conv1d_depthwise(make_const(x1), w1, b0, 1, 2)->value;
  auto y2 = conv1d_depthwise(make_const(x2), w1, b0, 1, 2)->value;
  Tensor rhs({3, 20});
  for (std::int64_t i = 0; i < rhs.size(); ++i) rhs[i] = alpha * y1[i] + beta * y2[i];
  CHECK(oracles::max_abs_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("gradients of every primitive pass finite differences") {
  std::mt19937_64 rng(13);
  const Tensor x23 = oracles::random_tensor({2, 3}, rng);
  const Tensor x234 = oracles::random_tensor({2, 3, 4}, rng);
  const Tensor x2346 = oracles::random_tensor({2, 3, 4, 6}, rng);

  CHECK(primitive_grad_error([](const VarPtr& v) { return relu(v); }, x23) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return leaky_relu(v, 0.01); }, x23) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return l2_normalize_rows(v); }, x23) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return row_logsumexp(v); }, x23) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return transpose(v); }, x23) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return avg_pool2d(v, {2, 3}, {2, 3}); }, x2346) < 1e-4);
  CHECK(primitive_grad_error([](const VarPtr& v) { return reshape(v, {6, 4}); }, x234) < 1e-4);
  CHECK(primitive_grad_error([&](const VarPtr& v) { return interleave_rows(v, v); }, x23) < 1e-4);

  // ops with parameters: check every input role
  {
    auto x = make_param(oracles::random_tensor({2, 3, 8}, rng));
    auto w = make_param(oracles::random_tensor({3, 5}, rng));
    auto b = make_param(oracles::random_tensor({3}, rng));
    ParameterGroup g;
    g.add("x", x);
    g.add("w", w);
    g.add("b", b);
    auto fn = [&]() {
      auto y = conv1d_depthwise(x, w, b, 2, 2);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 1}).max_rel_error < 1e-4);
  }
  {
    auto x = make_param(oracles::random_tensor({2, 2, 5, 6}, rng));
    auto w = make_param(oracles::random_tensor({3, 2, 2, 3}, rng));
    auto b = make_param(oracles::random_tensor({3}, rng));
    ParameterGroup g;
    g.add("x", x);
    g.add("w", w);
    g.add("b", b);
    auto fn = [&]() {
      auto y = conv2d(x, w, b, {2, 1}, {1, 1});
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 2}).max_rel_error < 1e-4);
  }
  {
    auto x = make_param(oracles::random_tensor({4, 6}, rng));
    auto w = make_param(oracles::random_tensor({6, 3}, rng));
    auto b = make_param(oracles::random_tensor({3}, rng));
    ParameterGroup g;
    g.add("x", x);
    g.add("w", w);
    g.add("b", b);
    auto fn = [&]() {
      auto y = linear(x, w, b);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 3}).max_rel_error < 1e-4);
  }
  {
    auto x = make_param(oracles::random_tensor({5, 4}, rng));
    auto gamma = make_param(oracles::random_tensor({4}, rng));
    auto beta = make_param(oracles::random_tensor({4}, rng));
    ParameterGroup g;
    g.add("x", x);
    g.add("gamma", gamma);
    g.add("beta", beta);
    Tensor rm({4}), rv = Tensor::full({4}, 1.0);
    auto fn = [&]() {
      auto y = batch_norm_train(x, gamma, beta, rm, rv, 0.1, 1e-5);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 4}).max_rel_error < 1e-4);
    auto fe = [&]() {
      auto y = batch_norm_eval(x, gamma, beta, rm, rv, 1e-5);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fe, g, {1e-5, 0, 5}).max_rel_error < 1e-4);
  }
  {
    auto a = make_param(oracles::random_tensor({3, 4}, rng));
    auto b = make_param(oracles::random_tensor({4, 5}, rng));
    ParameterGroup g;
    g.add("a", a);
    g.add("b", b);
    auto fn = [&]() {
      auto y = matmul(a, b);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 6}).max_rel_error < 1e-4);
  }
  {
    auto a = make_param(oracles::random_tensor({2, 3, 4}, rng));
    auto b = make_param(oracles::random_tensor({2, 2, 4}, rng));
    ParameterGroup g;
    g.add("a", a);
    g.add("b", b);
    auto fn = [&]() {
      auto y = concat({a, b}, 1);
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(fn, g, {1e-5, 0, 7}).max_rel_error < 1e-4);
  }
  {
    auto logits = make_param(oracles::random_tensor({5, 2}, rng));
    ParameterGroup g;
    g.add("logits", logits);
    std::vector<int> labels{0, 1, 1, 0, 1};
    auto fn = [&]() { return cross_entropy_with_labels(logits, labels); };
    CHECK(grad_check(fn, g, {1e-6, 0, 8}).max_rel_error < 1e-4);
  }
}

TEST_CASE("determinism: same graph twice gives identical values and gradients") {
  std::mt19937_64 rng(14);
  const Tensor x0 = oracles::random_tensor({2, 4, 16}, rng);
  const Tensor w0 = oracles::random_tensor({4, 5}, rng);
  auto run = [&]() {
    auto x = make_param(x0);
    auto w = make_param(w0);
    auto b = make_param(Tensor({4}));
    auto loss = sum_all(mul(conv1d_depthwise(x, w, b, 1, 2), conv1d_depthwise(x, w, b, 1, 2)));
    backward(loss);
    return std::make_pair(loss->value[0], w->grad);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  for (std::int64_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, moments decay") {
  auto w = make_param(Tensor({2}, {1.0, -2.0}));
  ParameterGroup g;
  g.add("w", w);
  w->ensure_grad();  // zero gradient
  adam_step(g, {0.1, 0.9, 0.999, 1e-8});
  CHECK(w->value[0] == 1.0);
  CHECK(w->value[1] == -2.0);
  CHECK(g.steps() == 1);
}

TEST_CASE("adam: first step with unit gradient moves by about -lr") {
  auto w = make_param(Tensor({1}, {0.5}));
  ParameterGroup g;
  g.add("w", w);
  w->ensure_grad();
  w->grad[0] = 1.0;
  adam_step(g, {0.1, 0.9, 0.999, 1e-8});
  // bias-corrected first step: delta = -lr * g / (|g| + eps)
  CHECK(w->value[0] == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("adam: quadratic bowl converges") {
  auto w = make_param(Tensor({1}, {1.0}));
  ParameterGroup g;
  g.add("w", w);
  for (int i = 0; i < 500; ++i) {
    auto loss = mul(w, w);
    backward(loss);
    adam_step(g, {0.01, 0.9, 0.999, 1e-8});
    g.zero_grads();
  }
  CHECK(std::abs(w->value[0]) < 1e-3);
}

TEST_CASE("adam: parameter outside the loss gets only moment decay") {
  auto w = make_param(Tensor({1}, {1.0}));
  auto unused = make_param(Tensor({1}, {3.0}));
  ParameterGroup g;
  g.add("w", w);
  g.add("unused", unused);
  auto loss = mul(w, w);
  backward(loss);
  unused->ensure_grad();
  adam_step(g, {0.05, 0.9, 0.999, 1e-8});
  CHECK(unused->value[0] == 3.0);
  CHECK(w->value[0] < 1.0);
}

TEST_CASE("adam: missing gradient raises") {
  auto w = make_param(Tensor({1}, {1.0}));
  ParameterGroup g;
  g.add("w", w);
  CHECK_THROWS_AS(adam_step(g, {0.1, 0.9, 0.999, 1e-8}), OptimizerError);
}

TEST_CASE("grad_check: linear loss is exact") {
  auto w = make_param(Tensor({1}, {2.0}));
  ParameterGroup g;
  g.add("w", w);
  auto fn = [&]() { return scale(w, 3.0); };
  auto res = grad_check(fn, g, {1e-5, 0, 0});
  CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("grad_check: corrupted gradient is reported") {
  std::mt19937_64 rng(15);
  auto w = make_param(oracles::random_tensor({3}, rng));
  ParameterGroup g;
  g.add("w", w);
  // op with a deliberately wrong backward (factor 2)
  auto broken = [&]() {
    auto node = scale(w, 1.0);
    auto out = std::make_shared<Var>(*node);
    out->parents = {w};
    out->backprop = [&](Var& self) {
      w->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) w->grad[i] += 2.0 * self.grad[i];
    };
    return sum_all(mul(out, out));
  };
  auto res = grad_check(broken, g, {1e-5, 0, 0});
  CHECK(res.max_rel_error > 0.3);
}

TEST_CASE("grad_check: non-deterministic loss is rejected") {
  auto w = make_param(Tensor({1}, {1.0}));
  ParameterGroup g;
  g.add("w", w);
  int calls = 0;
  auto fn = [&]() {
    ++calls;
    return scale(w, 1.0 + 0.001 * calls);
  };
  CHECK_THROWS_AS(grad_check(fn, g, {1e-5, 0, 0}), CheckInvalidError);
}
