#include "cascade/augment.hpp"

#include <cmath>

#include "cascade/error.hpp"

namespace cascade {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_ct(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": expects [C,T], got " + x.shape_str());
}

double channel_std(const double* row, int t) {
  double mean = 0.0;
  for (int i = 0; i < t; ++i) mean += row[i];
  mean /= t;
  double var = 0.0;
  for (int i = 0; i < t; ++i) {
    const double d = row[i] - mean;
    var += d * d;
  }
  return std::sqrt(var / t);
}

}  // namespace

void AugmentPolicy::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(freq.remove_prob) || !in01(freq.add_prob)) throw ConfigError("augment: probabilities must be in [0,1]");
  if (!(time.keep_ratio > 0.0 && time.keep_ratio <= 1.0)) throw ConfigError("augment: keep_ratio must be in (0,1]");
  if (!in01(time.shift_max_ratio)) throw ConfigError("augment: shift_max_ratio must be in [0,1]");
  if (time.jitter_sigma_ratio < 0.0 || time.scale_sigma < 0.0 || freq.add_amp_ratio < 0.0) {
    throw ConfigError("augment: strengths must be non-negative");
  }
}

const char* to_string(TimeMethod m) {
  switch (m) {
    case TimeMethod::jitter: return "jitter";
    case TimeMethod::scale: return "scale";
    case TimeMethod::time_shift: return "time_shift";
    case TimeMethod::neighborhood_segment: return "neighborhood_segment";
  }
  return "?";
}

const char* to_string(FreqMethod m) {
  switch (m) {
    case FreqMethod::remove_components: return "remove_components";
    case FreqMethod::add_components: return "add_components";
  }
  return "?";
}

Tensor circular_shift(const Tensor& x, int offset) {
  check_ct(x, "circular_shift");
  const int c = x.dim(0), t = x.dim(1);
  Tensor out(x.shape());
  const int off = ((offset % t) + t) % t;
  for (int ci = 0; ci < c; ++ci) {
    const double* src = x.data() + static_cast<std::int64_t>(ci) * t;
    double* dst = out.data() + static_cast<std::int64_t>(ci) * t;
    for (int i = 0; i < t; ++i) dst[i] = src[(i + off) % t];
  }
  return out;
}

TimeAugmentResult augment_time(const Tensor& x, const AugmentPolicy& policy, std::mt19937_64& rng) {
  check_ct(x, "augment_time");
  const int c = x.dim(0), t = x.dim(1);
  std::uniform_int_distribution<int> pick(0, kTimeBankSize - 1);
  const auto method = static_cast<TimeMethod>(pick(rng));
  Tensor out = x;
  std::normal_distribution<double> unit(0.0, 1.0);
  switch (method) {
    case TimeMethod::jitter: {
      for (int ci = 0; ci < c; ++ci) {
        double* row = out.data() + static_cast<std::int64_t>(ci) * t;
        const double sigma = policy.time.jitter_sigma_ratio * channel_std(row, t);
        for (int i = 0; i < t; ++i) row[i] += sigma * unit(rng);
      }
      break;
    }
    case TimeMethod::scale: {
      for (int ci = 0; ci < c; ++ci) {
        const double factor = 1.0 + policy.time.scale_sigma * unit(rng);
        double* row = out.data() + static_cast<std::int64_t>(ci) * t;
        for (int i = 0; i < t; ++i) row[i] *= factor;
      }
      break;
    }
    case TimeMethod::time_shift: {
      const int max_shift = static_cast<int>(std::lround(policy.time.shift_max_ratio * t));
      std::uniform_int_distribution<int> dist(-max_shift, max_shift);
      out = circular_shift(x, dist(rng));
      break;
    }
    case TimeMethod::neighborhood_segment: {
      const int keep = std::max(1, static_cast<int>(std::lround(policy.time.keep_ratio * t)));
      std::uniform_int_distribution<int> dist(0, t - keep);
      const int start = dist(rng);
      for (int ci = 0; ci < c; ++ci) {
        double* row = out.data() + static_cast<std::int64_t>(ci) * t;
        for (int i = 0; i < start; ++i) row[i] = 0.0;
        for (int i = start + keep; i < t; ++i) row[i] = 0.0;
      }
      break;
    }
  }
  return {std::move(out), method};
}

FreqAugmentResult augment_freq(const Tensor& xf, const AugmentPolicy& policy, std::mt19937_64& rng) {
  check_ct(xf, "augment_freq");
  const int c = xf.dim(0), t = xf.dim(1);
  std::uniform_int_distribution<int> pick(0, kFreqBankSize - 1);
  const auto method = static_cast<FreqMethod>(pick(rng));
  Tensor out = xf;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const int half = t / 2;
  for (int ci = 0; ci < c; ++ci) {
    double* row = out.data() + static_cast<std::int64_t>(ci) * t;
    double chan_max = 0.0;
    for (int i = 0; i < t; ++i) chan_max = std::max(chan_max, row[i]);
    const double amount = policy.freq.add_amp_ratio * chan_max;
    // Each draw covers a mirrored bin pair (k, T-k); k = 0 and k = T/2 map to themselves.
    for (int k = 0; k <= half; ++k) {
      const int mirror = (t - k) % t;
      if (method == FreqMethod::remove_components) {
        if (coin(rng) < policy.freq.remove_prob) {
          row[k] = 0.0;
          row[mirror] = 0.0;
        }
      } else {
        if (coin(rng) < policy.freq.add_prob) {
          row[k] += amount;
          if (mirror != k) row[mirror] += amount;
        }
      }
    }
  }
  return {std::move(out), method};
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample_index,
                          std::uint64_t view) {
  std::uint64_t s = splitmix64(global_seed);
  s = splitmix64(s ^ splitmix64(epoch));
  s = splitmix64(s ^ splitmix64(sample_index));
  s = splitmix64(s ^ splitmix64(view));
  return s;
}

}  // namespace cascade
