// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mtass {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kNumTracks = 3;
inline constexpr const char* kTrackNames[kNumTracks] = {"speech", "music",
                                                        "noise"};

// Raised when an input is well-formed but unusable (silence where energy is
// required, single-frame batch statistics, ...).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mono time-domain signal.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  AudioClip() = default;
  AudioClip(std::vector<double> s, int rate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  // Throws std::invalid_argument if the clip breaks the AudioClip invariants.
  void validate() const {
    if (sample_rate <= 0)
      throw std::invalid_argument("AudioClip: sample_rate must be positive");
    for (double v : samples)
      if (!std::isfinite(v))
        throw std::invalid_argument("AudioClip: non-finite sample");
  }
};

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Dense frames x bins grid of complex values, row-major by frame.
class ComplexGrid {
 public:
  using value_type = std::complex<double>;

  ComplexGrid() = default;
  ComplexGrid(std::size_t frames, std::size_t bins)
      : frames_(frames), bins_(bins), data_(frames * bins) {}

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t size() const { return data_.size(); }

  value_type& operator()(std::size_t t, std::size_t f) {
    return data_[t * bins_ + f];
  }
  const value_type& operator()(std::size_t t, std::size_t f) const {
    return data_[t * bins_ + f];
  }

  std::vector<value_type>& data() { return data_; }
  const std::vector<value_type>& data() const { return data_; }

  bool same_shape(const ComplexGrid& o) const {
    return frames_ == o.frames_ && bins_ == o.bins_;
  }
  bool all_finite() const {
    for (const auto& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

 protected:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<value_type> data_;
};

// STFT of a signal. `signal_length` remembers how many samples the analysed
// clip had so synthesis can trim the padding back off.
class ComplexSpectrogram : public ComplexGrid {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t frames, std::size_t bins,
                     std::size_t signal_length = 0, int sample_rate = kSampleRate)
      : ComplexGrid(frames, bins),
        signal_length_(signal_length),
        sample_rate_(sample_rate) {}

  std::size_t signal_length() const { return signal_length_; }
  int sample_rate() const { return sample_rate_; }

  // Same shape and synthesis metadata, zero-filled.
  ComplexSpectrogram zeros_like() const {
    return ComplexSpectrogram(frames_, bins_, signal_length_, sample_rate_);
  }

  ComplexSpectrogram& operator+=(const ComplexSpectrogram& o) {
    check(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  ComplexSpectrogram& operator-=(const ComplexSpectrogram& o) {
    check(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  friend ComplexSpectrogram operator+(ComplexSpectrogram a,
                                      const ComplexSpectrogram& b) {
    return a += b;
  }
  friend ComplexSpectrogram operator-(ComplexSpectrogram a,
                                      const ComplexSpectrogram& b) {
    return a -= b;
  }

 private:
  void check(const ComplexSpectrogram& o) const {
    if (!same_shape(o))
      throw std::invalid_argument("ComplexSpectrogram: shape mismatch");
  }

  std::size_t signal_length_ = 0;
  int sample_rate_ = kSampleRate;
};

// Complex ratio mask: one complex multiplier per time-frequency bin.
// Magnitude is unbounded.
class CRMask : public ComplexGrid {
 public:
  using ComplexGrid::ComplexGrid;
};

}  // namespace mtass
