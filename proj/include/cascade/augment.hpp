#pragma once

#include <cstdint>
#include <random>

#include "cascade/tensor.hpp"

namespace cascade {

struct TimeAugmentParams {
  double jitter_sigma_ratio = 0.1;  // noise std as a fraction of per-channel std
  double scale_sigma = 0.1;         // per-channel factor ~ Normal(1, scale_sigma)
  double shift_max_ratio = 0.1;     // circular shift up to this fraction of T
  double keep_ratio = 0.5;          // neighborhood window kept, rest zeroed
};

struct FreqAugmentParams {
  double remove_prob = 0.1;
  double add_prob = 0.1;
  double add_amp_ratio = 0.1;  // added amount as a fraction of the channel max
};

struct AugmentPolicy {
  TimeAugmentParams time;
  FreqAugmentParams freq;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

enum class TimeMethod : int { jitter = 0, scale = 1, time_shift = 2, neighborhood_segment = 3 };
enum class FreqMethod : int { remove_components = 0, add_components = 1 };

constexpr int kTimeBankSize = 4;
constexpr int kFreqBankSize = 2;

const char* to_string(TimeMethod m);
const char* to_string(FreqMethod m);

struct TimeAugmentResult {
  Tensor values;  // same shape as the input
  TimeMethod method;
};

struct FreqAugmentResult {
  Tensor values;
  FreqMethod method;
};

// Applies one method drawn uniformly from the time bank to the whole [C,T] sample.
TimeAugmentResult augment_time(const Tensor& x, const AugmentPolicy& policy, std::mt19937_64& rng);

// Applies one method drawn uniformly from the frequency bank. Masks are
// mirrored onto bins k and T-k so even symmetry of real-signal spectra is
// preserved; outputs stay non-negative.
FreqAugmentResult augment_freq(const Tensor& xf, const AugmentPolicy& policy, std::mt19937_64& rng);

// Circular left rotation by `offset` samples (negative shifts right).
Tensor circular_shift(const Tensor& x, int offset);

// Stable per-sample seed so augmentation draws do not depend on batch order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample_index,
                          std::uint64_t view);

}  // namespace cascade
