#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "cascade/augment.hpp"
#include "cascade/spectrum.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {

AugmentPolicy degenerate_policy() {
  AugmentPolicy p;
  p.time.jitter_sigma_ratio = 0.0;
  p.time.scale_sigma = 0.0;
  p.time.shift_max_ratio = 0.0;
  p.time.keep_ratio = 1.0;
  p.freq.remove_prob = 0.0;
  p.freq.add_prob = 0.0;
  p.freq.add_amp_ratio = 0.0;
  return p;
}

}  // namespace

TEST_CASE("degenerate strengths make every time method an identity") {
  std::mt19937_64 data_rng(31);
  auto x = oracles::random_tensor({3, 40}, data_rng);
  const auto policy = degenerate_policy();
  std::array<bool, kTimeBankSize> seen{};
  for (std::uint64_t s = 0; s < 64; ++s) {
    std::mt19937_64 rng(s);
    auto res = augment_time(x, policy, rng);
    seen[static_cast<std::size_t>(res.method)] = true;
    CHECK(res.values.shape() == x.shape());
    CHECK(oracles::max_abs_diff(res.values, x) == 0.0);
  }
  for (bool b : seen) CHECK(b);  // all four methods exercised
}

TEST_CASE("full-rotation circular shift is an identity") {
  std::mt19937_64 rng(32);
  auto x = oracles::random_tensor({2, 24}, rng);
  CHECK(oracles::max_abs_diff(circular_shift(x, 24), x) == 0.0);
  CHECK(oracles::max_abs_diff(circular_shift(x, -24), x) == 0.0);
  CHECK(oracles::max_abs_diff(circular_shift(circular_shift(x, 5), -5), x) == 0.0);
}

TEST_CASE("method selection is uniform over the bank") {
  std::mt19937_64 rng(33);
  auto x = oracles::random_tensor({1, 16}, rng);
  AugmentPolicy policy;
  std::array<int, kTimeBankSize> counts{};
  const int draws = 10000;
  std::mt19937_64 pick_rng(7);
  for (int i = 0; i < draws; ++i) {
    auto res = augment_time(x, policy, pick_rng);
    ++counts[static_cast<std::size_t>(res.method)];
  }
  for (int c : counts) {
    const double freq = static_cast<double>(c) / draws;
    CHECK(freq == doctest::Approx(0.25).epsilon(0.08));  // 0.25 +- 0.02
    CHECK(std::abs(freq - 0.25) < 0.02);
  }
}

TEST_CASE("same seed reproduces method choice and noise draws") {
  std::mt19937_64 rng(34);
  auto x = oracles::random_tensor({4, 32}, rng);
  AugmentPolicy policy;
  for (std::uint64_t seed : {1ULL, 99ULL}) {
    std::mt19937_64 r1(seed), r2(seed);
    auto a = augment_time(x, policy, r1);
    auto b = augment_time(x, policy, r2);
    CHECK(a.method == b.method);
    CHECK(oracles::max_abs_diff(a.values, b.values) == 0.0);
  }
}

TEST_CASE("remove_components with prob 0 and 1") {
  std::mt19937_64 rng(35);
  auto x = oracles::random_tensor({2, 16}, rng);
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = std::abs(x[i]);

  AugmentPolicy p0;
  p0.freq.remove_prob = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 r(attempt);
    auto res = augment_freq(x, p0, r);
    if (res.method == FreqMethod::remove_components) CHECK(oracles::max_abs_diff(res.values, x) == 0.0);
  }

  AugmentPolicy p1;
  p1.freq.remove_prob = 1.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 r(attempt);
    auto res = augment_freq(x, p1, r);
    if (res.method == FreqMethod::remove_components) {
      for (std::int64_t i = 0; i < res.values.size(); ++i) CHECK(res.values[i] == 0.0);
    }
  }
}

TEST_CASE("add_components raises selected bins by exactly amp_ratio * channel max") {
  Tensor x({1, 8});
  for (int i = 0; i < 8; ++i) x[i] = i == 3 || i == 5 ? 10.0 : 1.0;  // channel max 10
  AugmentPolicy p;
  p.freq.add_prob = 1.0;  // fixed mask: every pair selected
  p.freq.add_amp_ratio = 0.1;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 r(attempt);
    auto res = augment_freq(x, p, r);
    if (res.method != FreqMethod::add_components) continue;
    for (int i = 0; i < 8; ++i) CHECK(res.values[i] == doctest::Approx(x[i] + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("frequency augmentation preserves even symmetry and non-negativity") {
  std::mt19937_64 rng(36);
  Tensor signal = oracles::random_tensor({3, 32}, rng);
  Tensor xf = compute_spectrum(signal);
  AugmentPolicy p;
  p.freq.remove_prob = 0.4;
  p.freq.add_prob = 0.4;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    std::mt19937_64 r(seed);
    auto res = augment_freq(xf, p, r);
    CHECK(res.values.shape() == xf.shape());
    const int t = 32;
    for (int c = 0; c < 3; ++c) {
      for (int k = 1; k < t; ++k) {
        CHECK(res.values[static_cast<std::int64_t>(c) * t + k] ==
              doctest::Approx(res.values[static_cast<std::int64_t>(c) * t + (t - k)]).epsilon(1e-9));
      }
    }
    for (std::int64_t i = 0; i < res.values.size(); ++i) CHECK(res.values[i] >= 0.0);
  }
}

TEST_CASE("policy validation") {
  AugmentPolicy bad;
  bad.freq.remove_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  AugmentPolicy bad2;
  bad2.time.keep_ratio = 0.0;
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
  AugmentPolicy ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("derived seeds differ across epoch, sample and view") {
  const auto a = derive_seed(7, 0, 0, 1);
  CHECK(derive_seed(7, 1, 0, 1) != a);
  CHECK(derive_seed(7, 0, 1, 1) != a);
  CHECK(derive_seed(7, 0, 0, 2) != a);
  CHECK(derive_seed(7, 0, 0, 1) == a);
}
