// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mtass/audio.hpp"
#include "mtass/config.hpp"
#include "mtass/stft.hpp"

namespace mtass {

inline constexpr double kLossEps = 1e-8;
inline constexpr double kDbCap = 100.0;

struct LossWeights {
  double alpha = 0.01;
};

// Squared complex error of one track, mean- or sum-reduced over bins.
inline double complex_mse_track(const ComplexSpectrogram& y, const ComplexSpectrogram& s,
                                LossReduction red = LossReduction::kMean) {
  if (!y.same_shape(s)) throw std::invalid_argument("complex_mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::norm(y.data()[i] - s.data()[i]);
  if (red == LossReduction::kMean && y.size() > 0) acc /= static_cast<double>(y.size());
  return acc;
}

// Sum over tracks of the per-track complex MSE.
inline double complex_mse(const std::vector<ComplexSpectrogram>& y,
                          const std::vector<ComplexSpectrogram>& s,
                          LossReduction red = LossReduction::kMean) {
  if (y.size() != s.size()) throw std::invalid_argument("complex_mse: track count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += complex_mse_track(y[i], s[i], red);
  return total;
}

namespace detail {
struct SnrParts {
  double value;
  double e_est;
  double e_err;
  bool clamped;
};

inline SnrParts snr_parts(const std::vector<double>& y, const std::vector<double>& s) {
  if (y.size() != s.size()) throw std::invalid_argument("snr_term: length mismatch");
  double ey = 0.0, ee = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) {
    ey += y[n] * y[n];
    const double d = y[n] - s[n];
    ee += d * d;
  }
  const double raw = -10.0 * std::log10((ey + kLossEps) / (ee + kLossEps));
  const double v = std::clamp(raw, -kDbCap, kDbCap);
  return {v, ey, ee, v != raw};
}
}  // namespace detail

// -10 log10(sum y^2 / sum (y - s)^2) with both energies offset by 1e-8 and
// the result clamped to [-100, 100] dB. The numerator is the estimate's
// energy.
inline double snr_term(const AudioClip& y, const AudioClip& s) {
  return detail::snr_parts(y.samples, s.samples).value;
}

// d snr_term / d y. Zero where the value is clamped.
inline std::vector<double> snr_term_grad(const AudioClip& y, const AudioClip& s) {
  const auto p = detail::snr_parts(y.samples, s.samples);
  std::vector<double> g(y.size(), 0.0);
  if (p.clamped) return g;
  const double k = 10.0 / std::numbers::ln10;
  for (std::size_t n = 0; n < g.size(); ++n)
    g[n] = k * (2.0 * (y.samples[n] - s.samples[n]) / (p.e_err + kLossEps) -
                2.0 * y.samples[n] / (p.e_est + kLossEps));
  return g;
}

// sum_i [ complex_mse_i + alpha * snr_term_i ].
inline double multi_domain_loss(const std::vector<ComplexSpectrogram>& y_ri,
                                const std::vector<ComplexSpectrogram>& s_ri,
                                const std::vector<AudioClip>& y_time,
                                const std::vector<AudioClip>& s_time, const LossWeights& w,
                                LossReduction red = LossReduction::kMean) {
  if (y_time.size() != y_ri.size() || s_time.size() != y_ri.size())
    throw std::invalid_argument("multi_domain_loss: track count mismatch");
  double total = complex_mse(y_ri, s_ri, red);
  for (std::size_t i = 0; i < y_time.size(); ++i) total += w.alpha * snr_term(y_time[i], s_time[i]);
  return total;
}

struct LossParts {
  double total = 0.0;
  std::vector<double> mse;
  std::vector<double> snr;
};

struct LossWithGrad {
  LossParts parts;
  std::vector<ComplexSpectrogram> d_y;  // d loss / d Re + i d loss / d Im
};

// Multi-domain loss of complex estimates against references, with the
// gradient taken through the synthesis transform for the time-domain term.
inline LossWithGrad multi_domain_loss_grad(const std::vector<ComplexSpectrogram>& y_ri,
                                           const std::vector<ComplexSpectrogram>& s_ri,
                                           const std::vector<AudioClip>& s_time,
                                           const LossWeights& w, const Stft& stft,
                                           LossReduction red = LossReduction::kMean) {
  if (s_ri.size() != y_ri.size() || s_time.size() != y_ri.size())
    throw std::invalid_argument("multi_domain_loss_grad: track count mismatch");
  LossWithGrad out;
  for (std::size_t i = 0; i < y_ri.size(); ++i) {
    const double mse = complex_mse_track(y_ri[i], s_ri[i], red);
    const double scale =
        red == LossReduction::kMean ? 2.0 / static_cast<double>(y_ri[i].size()) : 2.0;
    ComplexSpectrogram d = y_ri[i].zeros_like();
    for (std::size_t k = 0; k < d.size(); ++k)
      d.data()[k] = scale * (y_ri[i].data()[k] - s_ri[i].data()[k]);
    double snr = 0.0;
    if (w.alpha != 0.0) {
      const AudioClip y_time = stft.inverse(y_ri[i]);
      snr = snr_term(y_time, s_time[i]);
      std::vector<double> g = snr_term_grad(y_time, s_time[i]);
      for (double& v : g) v *= w.alpha;
      d += stft.inverse_adjoint(g, y_ri[i]);
    }
    out.parts.mse.push_back(mse);
    out.parts.snr.push_back(snr);
    out.parts.total += mse + w.alpha * snr;
    out.d_y.push_back(std::move(d));
  }
  return out;
}

}  // namespace mtass
