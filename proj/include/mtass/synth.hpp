// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "mtass/audio.hpp"
#include "mtass/parallel.hpp"

namespace mtass {

// Desk-scale stand-ins for real speech, music and noise corpora. Each family
// has a distinct spectro-temporal signature:
//   speech: low-pitched voiced syllables (f0 90-220 Hz) with moving formants,
//           grouped into words separated by pauses;
//   music:  sustained 3-4 note chords from a diatonic scale (196-1047 Hz)
//           with bright harmonic spectra and slow envelopes;
//   noise:  stationary-ish filtered noise (white, pink, high- or band-pass)
//           with slow amplitude modulation.
struct SourceSet {
  std::vector<AudioClip> speech;
  std::vector<AudioClip> music;
  std::vector<AudioClip> noise;
};

namespace synth {

inline constexpr double kTargetRms = 0.1;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline void normalize_rms(std::vector<double>& x, double target = kTargetRms) {
  const double rms = std::sqrt(energy(x) / std::max<std::size_t>(1, x.size()));
  if (rms <= 0.0) return;
  const double g = target / rms;
  for (double& v : x) v *= g;
}

// Second-order resonance gain at frequency f for a formant (centre, bandwidth).
inline double resonance(double f, double centre, double bw) {
  const double d = (f - centre) / (0.5 * bw);
  return 1.0 / std::sqrt(1.0 + d * d);
}

inline AudioClip speech_like(std::uint64_t seed, double seconds,
                             int rate = kSampleRate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<double> x(n, 0.0);
  const double speaker_f0 = 90.0 + 130.0 * u(rng);
  const double nyq_limit = 3800.0;

  std::size_t pos = static_cast<std::size_t>(u(rng) * 0.3 * rate);
  while (pos < n) {
    const int syllables = 2 + static_cast<int>(u(rng) * 4);
    for (int s = 0; s < syllables && pos < n; ++s) {
      const auto len = static_cast<std::size_t>((0.12 + 0.18 * u(rng)) * rate);
      const double f1 = 300.0 + 600.0 * u(rng);
      const double f2 = 900.0 + 1600.0 * u(rng);
      const double f2_end = 900.0 + 1600.0 * u(rng);
      const double f0_start = speaker_f0 * (0.9 + 0.25 * u(rng));
      const double f0_end = speaker_f0 * (0.8 + 0.2 * u(rng));
      const double level = 0.6 + 0.4 * u(rng);
      const int harmonics = static_cast<int>(nyq_limit / (f0_start * 0.8));
      std::vector<double> phase(static_cast<std::size_t>(harmonics), 0.0);
      for (auto& p : phase) p = kTwoPi * u(rng);
      for (std::size_t i = 0; i < len && pos + i < n; ++i) {
        const double r = static_cast<double>(i) / len;
        const double f0 = f0_start + (f0_end - f0_start) * r;
        const double f2_now = f2 + (f2_end - f2) * r;
        const double env = level * std::sin(std::numbers::pi * r) *
                           std::sqrt(std::sin(std::numbers::pi * r));
        double acc = 0.0;
        for (int k = 1; k <= harmonics; ++k) {
          const double fk = k * f0;
          auto& ph = phase[static_cast<std::size_t>(k - 1)];
          ph += kTwoPi * fk / rate;
          if (fk >= nyq_limit) continue;
          const double amp = (resonance(fk, f1, 90.0) +
                              0.7 * resonance(fk, f2_now, 120.0) +
                              0.3 * resonance(fk, 2800.0, 200.0)) /
                             std::sqrt(static_cast<double>(k));
          acc += amp * std::sin(ph);
        }
        x[pos + i] += env * acc;
      }
      pos += len + static_cast<std::size_t>(0.02 * u(rng) * rate);
    }
    pos += static_cast<std::size_t>((0.15 + 0.55 * u(rng)) * rate);
  }
  normalize_rms(x);
  return AudioClip(std::move(x), rate);
}

inline AudioClip music_like(std::uint64_t seed, double seconds,
                            int rate = kSampleRate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<double> x(n, 0.0);
  static constexpr int kScale[] = {0, 2, 4, 5, 7, 9, 11};
  const int key = static_cast<int>(u(rng) * 12);
  const double brightness = 0.55 + 0.3 * u(rng);  // harmonic decay ratio
  const double max_freq = 6000.0;

  std::size_t pos = 0;
  while (pos < n) {
    const auto len = static_cast<std::size_t>((0.8 + 1.7 * u(rng)) * rate);
    const auto tail = static_cast<std::size_t>(0.15 * rate);
    const int notes = 3 + static_cast<int>(u(rng) * 2);
    const double attack = 0.03 + 0.07 * u(rng);
    const double decay = 0.4 + 1.2 * u(rng);
    for (int v = 0; v < notes; ++v) {
      const int degree = static_cast<int>(u(rng) * 7);
      const int octave = static_cast<int>(u(rng) * 3);
      const int midi = 55 + key % 5 + 12 * octave + kScale[degree];
      const double f0 = 440.0 * std::pow(2.0, (midi - 69) / 12.0);
      const double level = 0.5 + 0.5 * u(rng);
      const int harmonics = std::max(1, static_cast<int>(max_freq / f0));
      std::vector<double> phase(static_cast<std::size_t>(harmonics));
      for (auto& p : phase) p = kTwoPi * u(rng);
      for (std::size_t i = 0; i < len + tail && pos + i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        double env = std::min(1.0, t / attack) * std::exp(-t / decay * 0.3);
        if (i >= len) env *= 1.0 - static_cast<double>(i - len) / tail;
        double acc = 0.0;
        double amp = 1.0;
        for (int k = 1; k <= harmonics; ++k, amp *= brightness)
          acc += amp * std::sin(phase[static_cast<std::size_t>(k - 1)] +
                                kTwoPi * k * f0 * t);
        x[pos + i] += level * env * acc;
      }
    }
    pos += len;
  }
  normalize_rms(x);
  return AudioClip(std::move(x), rate);
}

inline AudioClip noise_like(std::uint64_t seed, double seconds,
                            int rate = kSampleRate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<double> x(n);
  const int kind = static_cast<int>(u(rng) * 4);
  // Biquad high-pass / band-pass (RBJ cookbook).
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  if (kind >= 2) {
    const double fc = kind == 2 ? 1000.0 + 2000.0 * u(rng) : 1500.0 + 3500.0 * u(rng);
    const double q = kind == 2 ? 0.707 : 0.7 + 1.3 * u(rng);
    const double w0 = kTwoPi * fc / rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double c = std::cos(w0);
    if (kind == 2) {
      b0 = (1.0 + c) / 2.0 / a0; b1 = -(1.0 + c) / a0; b2 = b0;
    } else {
      b0 = alpha / a0; b1 = 0.0; b2 = -alpha / a0;
    }
    a1 = -2.0 * c / a0;
    a2 = (1.0 - alpha) / a0;
  }
  double p0 = 0, p1 = 0, p2 = 0, p3 = 0, p4 = 0, p5 = 0, p6 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  const double am_rate = 0.2 + 1.8 * u(rng);
  const double am_depth = 0.5 * u(rng);
  const double am_phase = kTwoPi * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = gauss(rng);
    double y = w;
    if (kind == 1) {  // pink, Paul Kellet's refined filter
      p0 = 0.99886 * p0 + w * 0.0555179;
      p1 = 0.99332 * p1 + w * 0.0750759;
      p2 = 0.96900 * p2 + w * 0.1538520;
      p3 = 0.86650 * p3 + w * 0.3104856;
      p4 = 0.55000 * p4 + w * 0.5329522;
      p5 = -0.7616 * p5 - w * 0.0168980;
      y = p0 + p1 + p2 + p3 + p4 + p5 + p6 + w * 0.5362;
      p6 = w * 0.115926;
    } else if (kind >= 2) {
      y = b0 * w + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1; x1 = w; y2 = y1; y1 = y;
    }
    const double t = static_cast<double>(i) / rate;
    x[i] = y * (1.0 - am_depth * (0.5 + 0.5 * std::sin(kTwoPi * am_rate * t + am_phase)));
  }
  normalize_rms(x);
  return AudioClip(std::move(x), rate);
}

}  // namespace synth

// `count` clips of each family. Clip j of a family depends only on
// (seed, family, j).
inline SourceSet synth_sources(std::uint64_t seed, std::size_t count,
                               double seconds = 10.0, std::size_t workers = 1) {
  SourceSet out;
  out.speech.resize(count);
  out.music.resize(count);
  out.noise.resize(count);
  parallel_for(3 * count, workers, [&](std::size_t k) {
    const std::size_t family = k / count, j = k % count;
    const std::uint64_t s = mix_seed(mix_seed(seed, family), j);
    if (family == 0) out.speech[j] = synth::speech_like(s, seconds);
    else if (family == 1) out.music[j] = synth::music_like(s, seconds);
    else out.noise[j] = synth::noise_like(s, seconds);
  });
  return out;
}

}  // namespace mtass
