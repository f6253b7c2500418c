// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mtass/config.hpp"

namespace mtass {

// Static cost of one layer: trainable parameter elements and the
// multiply-accumulates it spends per STFT frame. Norms count their affine
// parameters but no MACs; masking, gating and residual additions are not
// counted as MACs.
struct LayerCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs_per_frame = 0;
};

namespace detail {
inline LayerCost dense(std::string name, std::int64_t in, std::int64_t out,
                       std::int64_t kernel = 1) {
  return {std::move(name), out * in * kernel + out, out * in * kernel};
}
inline LayerCost norm(std::string name, std::int64_t channels) {
  return {std::move(name), 2 * channels, 0};
}
}  // namespace detail

// Derived from the configuration alone; mirrors the layer inventory that
// Model<T> instantiates, in declaration order.
inline std::vector<LayerCost> layer_costs(const ModelConfig& c) {
  using detail::dense;
  using detail::norm;
  std::vector<LayerCost> out;
  const auto& s = c.separator;
  if (s.encoder_dim > 0) out.push_back(dense("sep.encoder", s.input_dim, s.encoder_dim));
  for (int j = 0; j < s.n_blocks; ++j) {
    const std::string b = "sep.block" + std::to_string(j);
    out.push_back(dense(b + ".squeeze", s.encoder_dim + s.input_dim, s.ms_channels[0]));
    out.push_back(norm(b + ".bn0", s.ms_channels[0]));
    const auto widths = subband_widths(s.ms_channels[0], s.subbands);
    for (std::size_t k = 0; k < widths.size(); ++k)
      out.push_back(dense(b + ".band" + std::to_string(k), widths[k], widths[k], s.kernel));
    out.push_back(norm(b + ".bn1", s.ms_channels[0]));
    out.push_back(dense(b + ".expand", s.ms_channels[0], s.ms_channels[1]));
    out.push_back(norm(b + ".bn2", s.ms_channels[1]));
    out.push_back(dense(b + ".project", s.ms_channels[1], s.ms_channels[2]));
  }
  for (int i = 0; i < s.tracks; ++i) {
    const std::string d = "sep.decoder" + std::to_string(i);
    out.push_back(dense(d + ".hidden", s.encoder_dim, s.decoder_dim));
    out.push_back(dense(d + ".mask", s.decoder_dim, s.mask_dim));
  }
  if (c.two_stage) {
    const auto& r = c.residual;
    for (int i = 0; i < s.tracks; ++i) {
      const std::string p = "res" + std::to_string(i);
      out.push_back(dense(p + ".in", r.input_dim, r.feature_dim));
      for (int k = 0; k < r.repeats * r.m_blocks; ++k) {
        const std::string b = p + ".block" + std::to_string(k);
        out.push_back(dense(b + ".in", r.feature_dim, r.bottleneck));
        out.push_back(norm(b + ".bn_in", r.bottleneck));
        out.push_back(dense(b + ".conv_a", r.bottleneck, r.bottleneck, r.kernel));
        out.push_back(norm(b + ".bn_a", r.bottleneck));
        out.push_back(dense(b + ".conv_b", r.bottleneck, r.bottleneck, r.kernel));
        out.push_back(norm(b + ".bn_b", r.bottleneck));
        out.push_back(dense(b + ".out", r.bottleneck, r.feature_dim));
      }
      out.push_back(dense(p + ".out", r.feature_dim, r.out_dim));
    }
  }
  return out;
}

inline std::int64_t count_params(const ModelConfig& c) {
  std::int64_t n = 0;
  for (const auto& l : layer_costs(c)) n += l.params;
  return n;
}

inline std::int64_t macs_per_frame(const ModelConfig& c) {
  std::int64_t n = 0;
  for (const auto& l : layer_costs(c)) n += l.macs_per_frame;
  return n;
}

inline std::int64_t count_macs_frames(const ModelConfig& c, std::int64_t frames) {
  return macs_per_frame(c) * frames;
}

// MACs for `seconds` of audio at the STFT frame rate (sample_rate / hop).
inline std::int64_t count_macs(const ModelConfig& c, double seconds = 1.0) {
  const double frames = seconds * c.sample_rate / c.hop;
  return std::llround(static_cast<double>(macs_per_frame(c)) * frames);
}

// Frames of context seen by one output frame: 1 + (k-1) * sum of dilations
// along the deepest path (parallel gated branches count once).
inline std::int64_t separator_receptive_field(const SeparatorConfig& s) {
  std::int64_t sum = 0;
  for (int j = 0; j < s.n_blocks; ++j)
    sum += s.dilation_cycle[static_cast<std::size_t>(j) % s.dilation_cycle.size()];
  return 1 + (s.kernel - 1) * sum;
}

inline std::int64_t residual_receptive_field(const ResidualConfig& r) {
  std::int64_t per_repeat = 0;
  for (int m = 0; m < r.m_blocks; ++m) per_repeat += std::int64_t{1} << m;
  return 1 + (r.kernel - 1) * r.repeats * per_repeat;
}

}  // namespace mtass
