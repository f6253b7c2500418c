// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "mtass/audio.hpp"
#include "mtass/fft.hpp"

namespace mtass {

inline constexpr std::size_t kWindowSize = 512;
inline constexpr std::size_t kHopSize = 256;
inline constexpr std::size_t kNumBins = kWindowSize / 2 + 1;  // 257

// Periodic square-root-Hann window. Used for both analysis and synthesis;
// w^2 sums to one at 50% overlap.
inline std::vector<double> make_window(std::size_t size) {
  if (size == 0) throw std::invalid_argument("make_window: size must be > 0");
  std::vector<double> w(size);
  for (std::size_t k = 0; k < size; ++k) {
    double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                        static_cast<double>(size));
    w[k] = std::sqrt(std::max(0.0, 0.5 - 0.5 * c));
  }
  return w;
}

struct StftConfig {
  std::size_t window = kWindowSize;
  std::size_t hop = kHopSize;
  // Reflect-pad window-hop samples on both ends (plus enough on the right to
  // reach a whole number of hops) and trim them after synthesis.
  bool pad = true;
};

// Analysis/synthesis pair. All members are const after construction, so one
// instance can serve several threads.
class Stft {
 public:
  explicit Stft(StftConfig cfg = {})
      : cfg_(cfg), fft_(cfg.window), window_(make_window(cfg.window)) {
    if (cfg_.hop == 0 || cfg_.hop > cfg_.window)
      throw std::invalid_argument("Stft: hop must be in (0, window]");
  }

  const StftConfig& config() const { return cfg_; }
  std::size_t bins() const { return cfg_.window / 2 + 1; }
  const std::vector<double>& window() const { return window_; }

  std::size_t num_frames(std::size_t len) const {
    if (cfg_.pad) return padded_length(len) / cfg_.hop + cfg_.window / cfg_.hop - 1;
    if (len < cfg_.window) return 0;
    return 1 + (len - cfg_.window) / cfg_.hop;
  }

  ComplexSpectrogram forward(const AudioClip& clip) const {
    if (clip.empty()) throw std::invalid_argument("stft: empty clip");
    if (clip.size() < cfg_.window)
      throw std::invalid_argument("stft: clip shorter than the window");
    const std::vector<double> x = cfg_.pad ? pad(clip.samples) : clip.samples;
    const std::size_t frames = num_frames(clip.size());
    const std::size_t length =
        cfg_.pad ? clip.size() : (frames - 1) * cfg_.hop + cfg_.window;
    ComplexSpectrogram spec(frames, bins(), length, clip.sample_rate);
    std::vector<double> seg(cfg_.window);
    std::vector<std::complex<double>> out(bins());
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t off = t * cfg_.hop;
      for (std::size_t k = 0; k < cfg_.window; ++k)
        seg[k] = x[off + k] * window_[k];
      fft_.rfft(seg, out);
      std::copy(out.begin(), out.end(), &spec(t, 0));
    }
    return spec;
  }

  AudioClip inverse(const ComplexSpectrogram& spec) const {
    check_bins(spec);
    const std::size_t frames = spec.frames();
    const std::size_t total = ola_length(frames);
    std::vector<double> ola(total, 0.0);
    std::vector<double> frame(cfg_.window);
    for (std::size_t t = 0; t < frames; ++t) {
      fft_.irfft(std::span(&spec(t, 0), bins()), frame);
      const std::size_t off = t * cfg_.hop;
      for (std::size_t k = 0; k < cfg_.window; ++k)
        ola[off + k] += frame[k] * window_[k];
    }
    const std::vector<double> env = envelope(frames);
    for (std::size_t n = 0; n < total; ++n) ola[n] *= env[n];
    return AudioClip(trim(ola, spec), spec.sample_rate());
  }

  // Adjoint of inverse(): maps d(loss)/d(samples) to d(loss)/d(Re X) +
  // i d(loss)/d(Im X) for a spectrogram shaped like `like`.
  ComplexSpectrogram inverse_adjoint(const std::vector<double>& grad,
                                     const ComplexSpectrogram& like) const {
    check_bins(like);
    const std::size_t frames = like.frames();
    const std::size_t total = ola_length(frames);
    std::vector<double> g(total, 0.0);
    const std::size_t lead = cfg_.pad ? cfg_.window - cfg_.hop : 0;
    const std::size_t keep = std::min(grad.size(), total - lead);
    if (grad.size() != output_length(like))
      throw std::invalid_argument("istft adjoint: gradient length mismatch");
    for (std::size_t n = 0; n < keep; ++n) g[lead + n] = grad[n];
    const std::vector<double> env = envelope(frames);
    for (std::size_t n = 0; n < total; ++n) g[n] *= env[n];

    ComplexSpectrogram out = like.zeros_like();
    const std::size_t nfft = cfg_.window;
    const double inv_n = 1.0 / static_cast<double>(nfft);
    std::vector<double> seg(nfft);
    std::vector<std::complex<double>> bins_out(bins());
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t off = t * cfg_.hop;
      for (std::size_t k = 0; k < nfft; ++k) seg[k] = g[off + k] * window_[k];
      fft_.rfft(seg, bins_out);
      for (std::size_t f = 0; f < bins(); ++f) {
        const double c = (f == 0 || f == nfft / 2) ? inv_n : 2.0 * inv_n;
        out(t, f) = c * bins_out[f];
      }
    }
    return out;
  }

  std::size_t output_length(const ComplexSpectrogram& spec) const {
    return cfg_.pad ? spec.signal_length() : ola_length(spec.frames());
  }

 private:
  std::size_t padded_length(std::size_t len) const {
    return (len + cfg_.hop - 1) / cfg_.hop * cfg_.hop;
  }

  std::size_t ola_length(std::size_t frames) const {
    return frames == 0 ? 0 : (frames - 1) * cfg_.hop + cfg_.window;
  }

  void check_bins(const ComplexSpectrogram& spec) const {
    if (spec.bins() != bins())
      throw std::invalid_argument("istft: expected " + std::to_string(bins()) +
                                  " bins, got " + std::to_string(spec.bins()));
  }

  std::vector<double> pad(const std::vector<double>& x) const {
    const std::size_t len = x.size();
    const std::size_t left = cfg_.window - cfg_.hop;
    const std::size_t right = left + (padded_length(len) - len);
    std::vector<double> out(left + len + right);
    for (std::size_t i = 0; i < left; ++i) out[i] = x[left - i];
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(left));
    for (std::size_t j = 0; j < right; ++j) out[left + len + j] = x[len - 2 - j];
    return out;
  }

  // Reciprocal of the summed squared window, zero where nothing overlaps.
  std::vector<double> envelope(std::size_t frames) const {
    std::vector<double> env(ola_length(frames), 0.0);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < cfg_.window; ++k)
        env[t * cfg_.hop + k] += window_[k] * window_[k];
    for (double& e : env) e = e > 1e-10 ? 1.0 / e : 0.0;
    return env;
  }

  std::vector<double> trim(const std::vector<double>& ola,
                           const ComplexSpectrogram& spec) const {
    if (!cfg_.pad) return ola;
    const std::size_t lead = cfg_.window - cfg_.hop;
    const std::size_t len = spec.signal_length();
    if (lead + len > ola.size())
      throw std::invalid_argument("istft: signal_length exceeds frame span");
    return std::vector<double>(ola.begin() + static_cast<std::ptrdiff_t>(lead),
                               ola.begin() + static_cast<std::ptrdiff_t>(lead + len));
  }

  StftConfig cfg_;
  Fft fft_;
  std::vector<double> window_;
};

inline ComplexSpectrogram stft(const AudioClip& clip,
                               std::size_t window_size = kWindowSize,
                               std::size_t hop = kHopSize) {
  return Stft({window_size, hop, true}).forward(clip);
}

inline AudioClip istft(const ComplexSpectrogram& spec,
                       std::size_t window_size = kWindowSize,
                       std::size_t hop = kHopSize) {
  return Stft({window_size, hop, true}).inverse(spec);
}

// frames x bins magnitudes, row-major by frame.
inline std::vector<double> magnitude(const ComplexGrid& spec) {
  std::vector<double> out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = std::abs(spec.data()[i]);
  return out;
}

inline ComplexSpectrogram apply_crm(const CRMask& mask,
                                    const ComplexSpectrogram& mix) {
  if (mask.frames() != mix.frames() || mask.bins() != mix.bins())
    throw std::invalid_argument("apply_crm: mask/mixture shape mismatch");
  ComplexSpectrogram out = mix.zeros_like();
  for (std::size_t i = 0; i < mix.size(); ++i)
    out.data()[i] = mask.data()[i] * mix.data()[i];
  return out;
}

inline constexpr double kIdealMaskEps = 1e-8;

// Mask M with M * mix == target on every bin where |mix| > eps; zero elsewhere.
inline CRMask ideal_crm(const ComplexSpectrogram& target,
                        const ComplexSpectrogram& mix,
                        double eps = kIdealMaskEps) {
  if (!target.same_shape(mix))
    throw std::invalid_argument("ideal_crm: shape mismatch");
  CRMask mask(mix.frames(), mix.bins());
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const auto m = mix.data()[i];
    const double p = std::norm(m);
    if (std::sqrt(p) > eps) mask.data()[i] = target.data()[i] * std::conj(m) / p;
  }
  return mask;
}

}  // namespace mtass
