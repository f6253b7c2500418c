// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace mtass {

// Iterative radix-2 complex FFT. Real transforms of length n run as one
// complex transform of length n/2. Tables are built once; all methods are
// const and may be shared between threads.
class Fft {
 public:
  using cplx = std::complex<double>;

  explicit Fft(std::size_t n) : n_(n) {
    if (n < 2 || (n & (n - 1)) != 0)
      throw std::invalid_argument("Fft: size must be a power of two >= 2");
    fwd_ = twiddles(n);
    inv_.resize(fwd_.size());
    for (std::size_t k = 0; k < fwd_.size(); ++k) inv_[k] = std::conj(fwd_[k]);
    const std::size_t h = n / 2;
    half_fwd_.resize(h / 2);
    half_inv_.resize(h / 2);
    for (std::size_t k = 0; k < h / 2; ++k) {
      half_fwd_[k] = fwd_[2 * k];
      half_inv_[k] = inv_[2 * k];
    }
    bitrev_ = bit_reverse(n);
    half_bitrev_ = bit_reverse(h);
  }

  std::size_t size() const { return n_; }

  // Unnormalised in both directions.
  void transform(std::span<cplx> data, bool inverse) const {
    if (data.size() != n_) throw std::invalid_argument("Fft: wrong length");
    run(data.data(), n_, bitrev_, inverse ? inv_ : fwd_);
  }

  // Real input of length n -> bins 0..n/2.
  void rfft(std::span<const double> in, std::span<cplx> out) const {
    if (in.size() != n_ || out.size() != n_ / 2 + 1)
      throw std::invalid_argument("Fft::rfft: wrong length");
    const std::size_t h = n_ / 2;
    thread_local std::vector<cplx> z;
    z.resize(h);
    for (std::size_t m = 0; m < h; ++m) z[m] = cplx(in[2 * m], in[2 * m + 1]);
    run(z.data(), h, half_bitrev_, half_fwd_);
    // Split into the spectra of even and odd samples, then combine.
    for (std::size_t k = 0; k <= h / 2; ++k) {
      const cplx a = z[k % h], b = std::conj(z[(h - k) % h]);
      const cplx e = 0.5 * (a + b);
      const cplx o = mul(cplx(0.0, -0.5), a - b);
      const cplx wo = mul(fwd_[k], o);
      out[k] = e + wo;
      out[h - k] = std::conj(e - wo);
    }
  }

  // Bins 0..n/2 (Hermitian extension implied) -> real signal of length n,
  // normalised by 1/n. Imaginary parts of DC and Nyquist are ignored.
  void irfft(std::span<const cplx> in, std::span<double> out) const {
    if (in.size() != n_ / 2 + 1 || out.size() != n_)
      throw std::invalid_argument("Fft::irfft: wrong length");
    const std::size_t h = n_ / 2;
    thread_local std::vector<cplx> z;
    z.resize(h);
    auto bin = [&](std::size_t k) {
      return k == 0 || k == h ? cplx(in[k].real(), 0.0) : in[k];
    };
    for (std::size_t k = 0; k < h; ++k) {
      const cplx a = bin(k), b = std::conj(bin(h - k));
      const cplx e = 0.5 * (a + b);
      const cplx o = mul(inv_[k], 0.5 * (a - b));
      z[k] = e + mul(cplx(0.0, 1.0), o);
    }
    run(z.data(), h, half_bitrev_, half_inv_);
    const double scale = 1.0 / static_cast<double>(h);
    for (std::size_t m = 0; m < h; ++m) {
      out[2 * m] = z[m].real() * scale;
      out[2 * m + 1] = z[m].imag() * scale;
    }
  }

 private:
  static cplx mul(cplx a, cplx b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  }

  static std::vector<cplx> twiddles(std::size_t n) {
    std::vector<cplx> w(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      w[k] = cplx(std::cos(a), std::sin(a));
    }
    return w;
  }

  static std::vector<std::size_t> bit_reverse(std::size_t n) {
    std::vector<std::size_t> r(n, 0);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r[i] |= std::size_t{1} << (bits - 1 - b);
    return r;
  }

  // In-place transform of length n with twiddles w[k] = exp(-+2 pi i k / n).
  static void run(cplx* data, std::size_t n, const std::vector<std::size_t>& bitrev,
                  const std::vector<cplx>& w) {
    for (std::size_t i = 0; i < n; ++i)
      if (i < bitrev[i]) std::swap(data[i], data[bitrev[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2, step = n / len;
      for (std::size_t start = 0; start < n; start += len)
        for (std::size_t j = 0; j < half; ++j) {
          const cplx u = data[start + j];
          const cplx v = mul(data[start + j + half], w[j * step]);
          data[start + j] = u + v;
          data[start + j + half] = u - v;
        }
    }
  }

  std::size_t n_;
  std::vector<cplx> fwd_, inv_, half_fwd_, half_inv_;
  std::vector<std::size_t> bitrev_, half_bitrev_;
};

}  // namespace mtass
