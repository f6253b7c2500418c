// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtass/audio.hpp"
#include "mtass/loss.hpp"

namespace mtass {

// Projection SDR. The estimate is split into its component along the
// reference and an orthogonal error:
//   s_target = (<est, ref> / ||ref||^2) ref,  e = est - s_target,
//   SDR = 10 log10(||s_target||^2 / ||e||^2), capped at +-100 dB.
// Interference, noise and artifact errors are not separated.
inline double sdr(const AudioClip& estimate, const AudioClip& reference) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("sdr: length mismatch");
  const double rr = energy(reference.samples);
  if (rr <= 0.0) throw std::invalid_argument("sdr: zero-energy reference");
  const double a = dot(estimate.samples, reference.samples) / rr;
  double target = 0.0, err = 0.0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const double t = a * reference.samples[n];
    const double e = estimate.samples[n] - t;
    target += t * t;
    err += e * e;
  }
  if (err <= 0.0) return kDbCap;
  if (target <= 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(target / err), -kDbCap, kDbCap);
}

inline double sdri(const AudioClip& estimate, const AudioClip& mixture,
                   const AudioClip& reference) {
  return sdr(estimate, reference) - sdr(mixture, reference);
}

struct ClipScore {
  std::string id;
  std::array<double, kNumTracks> sdr{};
  std::array<double, kNumTracks> sdr_mixture{};
  std::array<double, kNumTracks> sdri{};
};

inline ClipScore score_clip(std::string id, const std::array<AudioClip, kNumTracks>& estimates,
                            const AudioClip& mixture,
                            const std::array<const AudioClip*, kNumTracks>& references) {
  ClipScore c;
  c.id = std::move(id);
  for (std::size_t i = 0; i < kNumTracks; ++i) {
    c.sdr[i] = sdr(estimates[i], *references[i]);
    c.sdr_mixture[i] = sdr(mixture, *references[i]);
    c.sdri[i] = c.sdr[i] - c.sdr_mixture[i];
  }
  return c;
}

struct SdrReport {
  std::vector<ClipScore> clips;
  std::vector<std::string> skipped;  // records that failed to load/score
  std::array<double, kNumTracks> mean_sdr{};
  std::array<double, kNumTracks> mean_sdr_mixture{};
  std::array<double, kNumTracks> mean_sdri{};

  double average_sdri() const {
    return (mean_sdri[0] + mean_sdri[1] + mean_sdri[2]) / 3.0;
  }
  double average_sdr() const { return (mean_sdr[0] + mean_sdr[1] + mean_sdr[2]) / 3.0; }

  void aggregate() {
    mean_sdr = mean_sdr_mixture = mean_sdri = {};
    if (clips.empty()) return;
    for (const auto& c : clips)
      for (std::size_t i = 0; i < kNumTracks; ++i) {
        mean_sdr[i] += c.sdr[i];
        mean_sdr_mixture[i] += c.sdr_mixture[i];
        mean_sdri[i] += c.sdri[i];
      }
    const double n = static_cast<double>(clips.size());
    for (std::size_t i = 0; i < kNumTracks; ++i) {
      mean_sdr[i] /= n;
      mean_sdr_mixture[i] /= n;
      mean_sdri[i] /= n;
    }
  }
};

inline nlohmann::json to_json(const SdrReport& r) {
  auto tracks = [](const std::array<double, kNumTracks>& v) {
    nlohmann::json j;
    for (std::size_t i = 0; i < kNumTracks; ++i) j[kTrackNames[i]] = v[i];
    return j;
  };
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : r.clips)
    clips.push_back({{"id", c.id},
                     {"sdr", tracks(c.sdr)},
                     {"sdr_mixture", tracks(c.sdr_mixture)},
                     {"sdri", tracks(c.sdri)}});
  return {{"clips", clips},
          {"skipped", r.skipped},
          {"aggregate",
           {{"count", r.clips.size()},
            {"sdr", tracks(r.mean_sdr)},
            {"sdr_mixture", tracks(r.mean_sdr_mixture)},
            {"sdri", tracks(r.mean_sdri)},
            {"sdri_average", r.average_sdri()}}}};
}

// One row of an SDRi table: Methods,Speech,Music,Noise,Ave.
struct SdriRow {
  std::string method;
  std::array<double, kNumTracks> sdri{};
  double average() const { return (sdri[0] + sdri[1] + sdri[2]) / 3.0; }
};

inline void write_sdri_csv(std::ostream& os, const std::vector<SdriRow>& rows) {
  os << "Methods,Speech,Music,Noise,Ave\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    os << r.method << ',' << r.sdri[0] << ',' << r.sdri[1] << ',' << r.sdri[2] << ','
       << r.average() << '\n';
}

}  // namespace mtass
