#include "cascade/spectrum.hpp"

#include <cmath>

#include "cascade/error.hpp"

namespace cascade {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t t = x.size();
  std::vector<std::complex<double>> out(t);
  for (std::size_t k = 0; k < t; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < t; ++n) {
      const double ang = -kTwoPi * static_cast<double>(k) * static_cast<double>(n) / static_cast<double>(t);
      re += x[n] * std::cos(ang);
      im += x[n] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw DimensionError("fft_pow2: length must be a power of two, got " + std::to_string(n));
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -kTwoPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  if (x.empty()) throw DimensionError("dft: empty input");
  if (!is_pow2(x.size())) return naive_dft(x);
  std::vector<std::complex<double>> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft_pow2(a);
  return a;
}

Tensor compute_spectrum(const Tensor& x, std::int64_t* transform_counter) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) {
    throw DimensionError("compute_spectrum: expects [C,T] or [N,C,T], got " + x.shape_str());
  }
  const int t = x.dim(x.rank() - 1);
  if (t < 2) throw DimensionError("compute_spectrum: T must be >= 2");
  if (!x.all_finite()) throw NumericError("compute_spectrum: non-finite input");
  const std::int64_t channels = x.size() / t;
  Tensor out(x.shape());
  std::vector<double> buf(static_cast<std::size_t>(t));
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* src = x.data() + c * t;
    std::copy(src, src + t, buf.begin());
    const auto spec = dft(buf);
    double* dst = out.data() + c * t;
    for (int k = 0; k < t; ++k) {
      dst[k] = std::sqrt(spec[static_cast<std::size_t>(k)].real() * spec[static_cast<std::size_t>(k)].real() +
                         spec[static_cast<std::size_t>(k)].imag() * spec[static_cast<std::size_t>(k)].imag());
    }
    if (transform_counter) ++(*transform_counter);
  }
  return out;
}

}  // namespace cascade
