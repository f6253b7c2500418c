// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtass/stft.hpp"

namespace mtass {

inline constexpr int kConfigVersion = 1;

// Multi-scale TCN separator with a per-track complex decoder.
struct SeparatorConfig {
  int input_dim = 257;       // magnitude bins
  int encoder_dim = 1024;    // linear encoder width
  int n_blocks = 15;         // multi-scale ResBlocks
  // 1x1 squeeze (subband stage width), 1x1 expand, 1x1 back to encoder_dim.
  std::array<int, 3> ms_channels{257, 514, 1024};
  int subbands = 8;
  std::vector<int> dilation_cycle{1, 3, 5, 7, 11};
  int kernel = 3;
  int decoder_dim = 1024;
  int mask_dim = 514;        // real || imaginary
  int tracks = 3;
};

// Gated TCN that estimates the residual of one track.
struct ResidualConfig {
  int input_dim = 514;
  int feature_dim = 256;
  int bottleneck = 64;
  int m_blocks = 8;          // dilations 1, 2, ..., 2^(M-1)
  int repeats = 5;
  int kernel = 3;
  int out_dim = 514;
  double dropout = 0.1;
};

enum class LossReduction { kMean, kSum };

struct ModelConfig {
  int version = kConfigVersion;
  SeparatorConfig separator;
  ResidualConfig residual;
  int window = static_cast<int>(kWindowSize);
  int hop = static_cast<int>(kHopSize);
  int sample_rate = kSampleRate;
  double alpha = 0.01;
  LossReduction reduction = LossReduction::kMean;
  bool two_stage = true;     // false: residual estimators are not built
};

// Channel widths of the subbands a `width`-channel stage is split into:
// (subbands - 1) bands of ceil(width / subbands) and the remainder last.
inline std::vector<int> subband_widths(int width, int subbands) {
  if (subbands <= 0 || width < subbands)
    throw std::invalid_argument("subband_widths: need 1 <= subbands <= width");
  const int base = (width + subbands - 1) / subbands;
  std::vector<int> w(static_cast<std::size_t>(subbands), base);
  w.back() = width - base * (subbands - 1);
  if (w.back() <= 0) throw std::invalid_argument("subband_widths: empty last band");
  return w;
}

inline void validate(const ModelConfig& c) {
  const auto& s = c.separator;
  const auto& r = c.residual;
  const int bins = c.window / 2 + 1;
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (c.version != kConfigVersion) fail("unsupported version " + std::to_string(c.version));
  if (s.input_dim != bins) fail("separator.input_dim must equal window/2+1");
  if (s.mask_dim != 2 * bins) fail("separator.mask_dim must equal 2*(window/2+1)");
  if (s.n_blocks < 0 || s.tracks < 0 || s.encoder_dim < 0) fail("negative size");
  if (s.n_blocks > 0) {
    if (s.ms_channels[2] != s.encoder_dim) fail("ms_channels[2] must equal encoder_dim");
    if (s.dilation_cycle.empty()) fail("empty dilation_cycle");
    subband_widths(s.ms_channels[0], s.subbands);
  }
  if (s.kernel % 2 == 0 || r.kernel % 2 == 0) fail("kernel sizes must be odd");
  if (r.input_dim != 2 * bins || r.out_dim != 2 * bins)
    fail("residual input/output dims must equal 2*(window/2+1)");
  if (r.dropout < 0.0 || r.dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (c.alpha < 0.0) fail("alpha must be >= 0");
  if (c.two_stage && s.tracks != 3) fail("two-stage model needs 3 tracks");
}

// Full-size architecture (N=15, M=8, R=5).
inline ModelConfig full_config() { return ModelConfig{}; }

// Desk-scale model: N=2, M=3, R=1 and every hidden width divided by 8.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.separator.encoder_dim = 128;
  c.separator.n_blocks = 2;
  c.separator.ms_channels = {32, 64, 128};
  c.separator.decoder_dim = 128;
  c.residual.feature_dim = 32;
  c.residual.bottleneck = 8;
  c.residual.m_blocks = 3;
  c.residual.repeats = 1;
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  const auto& s = c.separator;
  const auto& r = c.residual;
  return {{"version", c.version},
          {"separator",
           {{"input_dim", s.input_dim},
            {"encoder_dim", s.encoder_dim},
            {"n_blocks", s.n_blocks},
            {"ms_channels", s.ms_channels},
            {"subbands", s.subbands},
            {"dilation_cycle", s.dilation_cycle},
            {"kernel", s.kernel},
            {"decoder_dim", s.decoder_dim},
            {"mask_dim", s.mask_dim},
            {"tracks", s.tracks}}},
          {"residual",
           {{"input_dim", r.input_dim},
            {"feature_dim", r.feature_dim},
            {"bottleneck", r.bottleneck},
            {"m_blocks", r.m_blocks},
            {"repeats", r.repeats},
            {"kernel", r.kernel},
            {"out_dim", r.out_dim},
            {"dropout", r.dropout}}},
          {"window", c.window},
          {"hop", c.hop},
          {"sample_rate", c.sample_rate},
          {"alpha", c.alpha},
          {"reduction", c.reduction == LossReduction::kMean ? "mean" : "sum"},
          {"two_stage", c.two_stage}};
}

// Missing keys keep their defaults, so partial config files are accepted.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.version = j.value("version", c.version);
  if (j.contains("separator")) {
    const auto& js = j.at("separator");
    auto& s = c.separator;
    s.input_dim = js.value("input_dim", s.input_dim);
    s.encoder_dim = js.value("encoder_dim", s.encoder_dim);
    s.n_blocks = js.value("n_blocks", s.n_blocks);
    s.ms_channels = js.value("ms_channels", s.ms_channels);
    s.subbands = js.value("subbands", s.subbands);
    s.dilation_cycle = js.value("dilation_cycle", s.dilation_cycle);
    s.kernel = js.value("kernel", s.kernel);
    s.decoder_dim = js.value("decoder_dim", s.decoder_dim);
    s.mask_dim = js.value("mask_dim", s.mask_dim);
    s.tracks = js.value("tracks", s.tracks);
  }
  if (j.contains("residual")) {
    const auto& jr = j.at("residual");
    auto& r = c.residual;
    r.input_dim = jr.value("input_dim", r.input_dim);
    r.feature_dim = jr.value("feature_dim", r.feature_dim);
    r.bottleneck = jr.value("bottleneck", r.bottleneck);
    r.m_blocks = jr.value("m_blocks", r.m_blocks);
    r.repeats = jr.value("repeats", r.repeats);
    r.kernel = jr.value("kernel", r.kernel);
    r.out_dim = jr.value("out_dim", r.out_dim);
    r.dropout = jr.value("dropout", r.dropout);
  }
  c.window = j.value("window", c.window);
  c.hop = j.value("hop", c.hop);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.alpha = j.value("alpha", c.alpha);
  const std::string red = j.value("reduction", std::string("mean"));
  if (red != "mean" && red != "sum") throw std::invalid_argument("reduction must be mean|sum");
  c.reduction = red == "sum" ? LossReduction::kSum : LossReduction::kMean;
  c.two_stage = j.value("two_stage", c.two_stage);
  validate(c);
  return c;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path);
  return model_config_from_json(nlohmann::json::parse(is));
}

}  // namespace mtass
