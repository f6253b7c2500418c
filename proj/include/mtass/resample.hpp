// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mtass/audio.hpp"

namespace mtass {

struct ResampleOptions {
  double stopband_db = 80.0;
  // Transition band as a fraction of the output (or input, if upsampling)
  // Nyquist frequency. The stopband starts exactly at that Nyquist.
  double transition = 0.1;
};

namespace detail {

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Kaiser-windowed sinc sampled at the fractional offset of one polyphase
// branch, normalised to unit DC gain.
inline std::vector<double> polyphase_taps(double frac, int half, double cutoff,
                                          double beta) {
  std::vector<double> taps(2 * static_cast<std::size_t>(half) + 2, 0.0);
  const double i0b = std::cyl_bessel_i(0.0, beta);
  double sum = 0.0;
  for (int j = -half; j <= half + 1; ++j) {
    const double tau = frac - j;
    const double r = tau / (half + 1.0);
    double w = 0.0;
    if (std::abs(r) < 1.0)
      w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0b;
    const double h = cutoff * sinc(cutoff * tau) * w;
    taps[static_cast<std::size_t>(j + half)] = h;
    sum += h;
  }
  if (std::abs(sum) > 1e-12)
    for (double& h : taps) h /= sum;
  return taps;
}

}  // namespace detail

// Rational-ratio windowed-sinc resampler. Output length is
// round(len * target / source); samples outside the input are taken as zero.
inline AudioClip resample(const AudioClip& clip, int target_rate,
                          const ResampleOptions& opts = {}) {
  if (target_rate <= 0)
    throw std::invalid_argument("resample: target rate must be positive");
  if (clip.sample_rate <= 0)
    throw std::invalid_argument("resample: source rate must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const std::int64_t g = std::gcd(clip.sample_rate, target_rate);
  const std::int64_t up = target_rate / g;
  const std::int64_t down = clip.sample_rate / g;
  const double ratio = std::min(1.0, static_cast<double>(up) / down);
  const double cutoff = ratio * (1.0 - opts.transition / 2.0);
  const double delta_w = std::numbers::pi * opts.transition * ratio;
  const int half = static_cast<int>(
      std::ceil((opts.stopband_db - 8.0) / (2.285 * delta_w) / 2.0));
  const double a = opts.stopband_db;
  const double beta = a > 50.0 ? 0.1102 * (a - 8.7)
                               : (a >= 21.0 ? 0.5842 * std::pow(a - 21.0, 0.4) +
                                                  0.07886 * (a - 21.0)
                                            : 0.0);

  const auto in_len = static_cast<std::int64_t>(clip.size());
  const std::int64_t out_len = (in_len * up + down / 2) / down;

  // One table per phase when the phase count is modest; otherwise taps are
  // computed per output sample.
  const bool tabulate = up <= 4096;
  std::vector<std::vector<double>> table;
  if (tabulate) {
    table.reserve(static_cast<std::size_t>(up));
    for (std::int64_t p = 0; p < up; ++p)
      table.push_back(detail::polyphase_taps(static_cast<double>(p) / up, half,
                                             cutoff, beta));
  }

  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  for (std::int64_t n = 0; n < out_len; ++n) {
    const std::int64_t pos = n * down;
    const std::int64_t base = pos / up;
    const std::int64_t phase = pos % up;
    std::vector<double> local;
    const std::vector<double>* taps;
    if (tabulate) {
      taps = &table[static_cast<std::size_t>(phase)];
    } else {
      local = detail::polyphase_taps(static_cast<double>(phase) / up, half,
                                     cutoff, beta);
      taps = &local;
    }
    double acc = 0.0;
    for (int j = -half; j <= half + 1; ++j) {
      const std::int64_t idx = base + j;
      if (idx < 0 || idx >= in_len) continue;
      acc += (*taps)[static_cast<std::size_t>(j + half)] *
             clip.samples[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(n)] = acc;
  }
  return AudioClip(std::move(out), target_rate);
}

}  // namespace mtass
