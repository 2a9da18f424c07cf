#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cascade/error.hpp"
#include "cascade/spectrum.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

TEST_CASE("naive_dft: delta input gives all-ones") {
  std::vector<double> x(16, 0.0);
  x[0] = 1.0;
  auto spec = naive_dft(x);
  for (const auto& v : spec) {
    CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(v.imag()) < 1e-12);
  }
}

TEST_CASE("naive_dft: constant input concentrates at bin 0") {
  const int t = 12;
  std::vector<double> x(t, 1.0);
  auto spec = naive_dft(x);
  CHECK(spec[0].real() == doctest::Approx(t));
  for (int k = 1; k < t; ++k) CHECK(std::abs(spec[static_cast<std::size_t>(k)]) < 1e-9);
}

TEST_CASE("naive_dft: Parseval identity on random input") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int t = 37;
  std::vector<double> x(t);
  double time_energy = 0.0;
  for (auto& v : x) {
    v = dist(rng);
    time_energy += v * v;
  }
  auto spec = naive_dft(x);
  double freq_energy = 0.0;
  for (const auto& v : spec) freq_energy += std::norm(v);
  CHECK(time_energy == doctest::Approx(freq_energy / t).epsilon(1e-9));
}

TEST_CASE("compute_spectrum: zeros map to zeros") {
  auto out = compute_spectrum(Tensor({2, 16}));
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("compute_spectrum: pure cosine lands on bins 1 and T-1 with |X| = T/2") {
  const int t = 8;
  Tensor x({1, t});
  for (int n = 0; n < t; ++n) x[n] = std::cos(kTwoPi * n / t);
  auto out = compute_spectrum(x);
  CHECK(out[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(out[7] == doctest::Approx(4.0).epsilon(1e-12));
  for (int k : {0, 2, 3, 4, 5, 6}) CHECK(std::abs(out[k]) < 1e-9);
}

TEST_CASE("compute_spectrum matches the naive oracle on random input") {
  std::mt19937_64 rng(22);
  auto x = oracles::random_tensor({2, 64}, rng);
  auto fast = compute_spectrum(x);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> row(x.data() + c * 64, x.data() + (c + 1) * 64);
    auto spec = naive_dft(row);
    for (int k = 0; k < 64; ++k) {
      CHECK(std::abs(fast[static_cast<std::int64_t>(c) * 64 + k] - std::abs(spec[static_cast<std::size_t>(k)])) <
            1e-9);
    }
  }
}

TEST_CASE("fast path equals the oracle for powers of two; non-powers route to the naive path") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int t : {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 3, 6, 12, 20, 48, 100, 144}) {
    Tensor x({1, t});
    for (int i = 0; i < t; ++i) x[i] = dist(rng);
    auto got = compute_spectrum(x);
    std::vector<double> row(x.data(), x.data() + t);
    auto spec = naive_dft(row);
    for (int k = 0; k < t; ++k) {
      CHECK(std::abs(got[k] - std::abs(spec[static_cast<std::size_t>(k)])) < 1e-9);
    }
  }
}

TEST_CASE("magnitude spectrum of real input is even-symmetric about T/2") {
  std::mt19937_64 rng(24);
  for (int t : {16, 21}) {
    Tensor x({3, t});
    std::normal_distribution<double> dist(0.0, 2.0);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = dist(rng);
    auto out = compute_spectrum(x);
    for (int c = 0; c < 3; ++c) {
      for (int k = 1; k < t; ++k) {
        CHECK(out[static_cast<std::int64_t>(c) * t + k] ==
              doctest::Approx(out[static_cast<std::int64_t>(c) * t + (t - k)]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("scale equivariance for non-negative factors") {
  std::mt19937_64 rng(25);
  auto x = oracles::random_tensor({2, 24}, rng);
  for (double a : {0.0, 0.5, 3.0}) {
    Tensor ax({2, 24});
    for (std::int64_t i = 0; i < x.size(); ++i) ax[i] = a * x[i];
    auto lhs = compute_spectrum(ax);
    auto base = compute_spectrum(x);
    for (std::int64_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(a * base[i]).epsilon(1e-9));
  }
}

TEST_CASE("non-finite input is rejected") {
  Tensor x({1, 8});
  x[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(compute_spectrum(x), NumericError);
}

TEST_CASE("batched input keeps shape and counts transforms per channel") {
  std::mt19937_64 rng(26);
  auto x = oracles::random_tensor({3, 2, 16}, rng);
  std::int64_t calls = 0;
  auto out = compute_spectrum(x, &calls);
  CHECK(out.shape() == std::vector<int>{3, 2, 16});
  CHECK(calls == 6);
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] >= 0.0);
}
