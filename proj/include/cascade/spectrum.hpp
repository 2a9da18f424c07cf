#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

// Direct O(T^2) discrete Fourier transform. Reference implementation used to
// validate the fast path; keep it independent of fft_pow2.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a);

// Forward DFT of a real signal: radix-2 fast path when the length is a power
// of two, naive summation otherwise.
std::vector<std::complex<double>> dft(const std::vector<double>& x);

// Per-channel magnitude of the length-T DFT. Input is [C,T] or [N,C,T]; the
// output keeps the full conjugate-symmetric length so shapes are preserved.
// `transform_counter`, when given, is bumped once per channel transform.
Tensor compute_spectrum(const Tensor& x, std::int64_t* transform_counter = nullptr);

// Frequency-domain counterpart of a batch of segments.
struct SpectrumBatch {
  Tensor values;  // [N,C,T], entries >= 0
  std::vector<std::string> subject_ids;
  std::vector<std::string> trial_ids;
  std::vector<int> labels;
};

}  // namespace cascade
