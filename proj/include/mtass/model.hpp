// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtass/audio.hpp"
#include "mtass/config.hpp"
#include "mtass/layers.hpp"
#include "mtass/parallel.hpp"
#include "mtass/stft.hpp"
#include "mtass/tensor.hpp"

namespace mtass {

// ---------------------------------------------------------------------------
// Real/imaginary packing. A spectrogram with F bins and T frames becomes a
// (2F) x T matrix: rows [0, F) hold the real parts, rows [F, 2F) the
// imaginary parts.

template <typename T>
Mat<T> to_ri(const ComplexGrid& spec) {
  const auto f = static_cast<Index>(spec.bins());
  Mat<T> out(2 * f, static_cast<Index>(spec.frames()));
  for (Index t = 0; t < out.cols(); ++t)
    for (Index k = 0; k < f; ++k) {
      const auto& v = spec(static_cast<std::size_t>(t), static_cast<std::size_t>(k));
      out(k, t) = static_cast<T>(v.real());
      out(f + k, t) = static_cast<T>(v.imag());
    }
  return out;
}

// Inverse of to_ri; frame count, signal length and rate are taken from `like`.
template <typename Derived>
ComplexSpectrogram from_ri(const Eigen::MatrixBase<Derived>& ri,
                           const ComplexSpectrogram& like) {
  const auto f = static_cast<Index>(like.bins());
  if (ri.rows() != 2 * f || ri.cols() != static_cast<Index>(like.frames()))
    throw std::invalid_argument("from_ri: shape mismatch");
  ComplexSpectrogram out = like.zeros_like();
  for (Index t = 0; t < ri.cols(); ++t)
    for (Index k = 0; k < f; ++k)
      out(static_cast<std::size_t>(t), static_cast<std::size_t>(k)) = {
          static_cast<double>(ri(k, t)), static_cast<double>(ri(f + k, t))};
  return out;
}

template <typename T>
Mat<T> ri_magnitude(const Mat<T>& ri) {
  const Index f = ri.rows() / 2;
  return (ri.topRows(f).array().square() + ri.bottomRows(f).array().square())
      .sqrt()
      .matrix();
}

// Complex product mask * mix in RI packing.
template <typename T>
Mat<T> ri_multiply(const Mat<T>& mask, const Mat<T>& mix) {
  if (mask.rows() != mix.rows() || mask.cols() != mix.cols() || mix.rows() % 2)
    throw std::invalid_argument("ri_multiply: shape mismatch");
  const Index f = mix.rows() / 2;
  Mat<T> out(mix.rows(), mix.cols());
  const auto mr = mask.topRows(f).array(), mi = mask.bottomRows(f).array();
  const auto xr = mix.topRows(f).array(), xi = mix.bottomRows(f).array();
  out.topRows(f) = (mr * xr - mi * xi).matrix();
  out.bottomRows(f) = (mr * xi + mi * xr).matrix();
  return out;
}

// Gradient of ri_multiply with respect to the mask.
template <typename T>
Mat<T> ri_multiply_mask_grad(const Mat<T>& d_out, const Mat<T>& mix) {
  const Index f = mix.rows() / 2;
  Mat<T> d(mix.rows(), mix.cols());
  const auto gr = d_out.topRows(f).array(), gi = d_out.bottomRows(f).array();
  const auto xr = mix.topRows(f).array(), xi = mix.bottomRows(f).array();
  d.topRows(f) = (gr * xr + gi * xi).matrix();
  d.bottomRows(f) = (gi * xr - gr * xi).matrix();
  return d;
}

// ---------------------------------------------------------------------------
// Separator.

// Multi-scale ResBlock:
//   [features ; magnitude] -> 1x1 conv -> BN -> ReLU
//   -> subband-wise dilated conv (k, block dilation) -> BN -> ReLU
//   -> 1x1 conv -> BN -> ReLU -> 1x1 conv -> + features
template <typename T>
class MsResBlock {
 public:
  MsResBlock(const std::string& name, const SeparatorConfig& c, int dilation)
      : feat_dim_(c.encoder_dim),
        squeeze_(name + ".squeeze", c.encoder_dim + c.input_dim, c.ms_channels[0]),
        bn0_(name + ".bn0", c.ms_channels[0]),
        bn1_(name + ".bn1", c.ms_channels[0]),
        expand_(name + ".expand", c.ms_channels[0], c.ms_channels[1]),
        bn2_(name + ".bn2", c.ms_channels[1]),
        project_(name + ".project", c.ms_channels[1], c.ms_channels[2]) {
    Index off = 0;
    const auto widths = subband_widths(c.ms_channels[0], c.subbands);
    for (std::size_t b = 0; b < widths.size(); ++b) {
      bands_.emplace_back(name + ".band" + std::to_string(b), widths[b], widths[b], c.kernel,
                          dilation);
      band_offsets_.push_back(off);
      off += widths[b];
    }
  }

  void init(std::mt19937_64& rng) {
    squeeze_.init(rng);
    for (auto& b : bands_) b.init(rng);
    expand_.init(rng);
    project_.init(rng);
  }

  void set_mode(Mode m) {
    bn0_.set_mode(m);
    bn1_.set_mode(m);
    bn2_.set_mode(m);
  }

  Mat<T> forward(const Mat<T>& x, const Mat<T>& mag, Index seq_len) {
    if (x.rows() != feat_dim_ || mag.cols() != x.cols())
      throw std::invalid_argument("MsResBlock: feature/magnitude shape mismatch");
    Mat<T> z(x.rows() + mag.rows(), x.cols());
    z.topRows(x.rows()) = x;
    z.bottomRows(mag.rows()) = mag;
    Mat<T> h0 = act0_.forward(bn0_.forward(squeeze_.forward(z, seq_len)));
    Mat<T> h1(h0.rows(), h0.cols());
    for (std::size_t b = 0; b < bands_.size(); ++b) {
      const Index w = bands_[b].in_channels();
      h1.middleRows(band_offsets_[b], w) =
          bands_[b].forward(h0.middleRows(band_offsets_[b], w), seq_len);
    }
    h1 = act1_.forward(bn1_.forward(h1));
    Mat<T> h2 = act2_.forward(bn2_.forward(expand_.forward(h1, seq_len)));
    return x + project_.forward(h2, seq_len);
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> g = project_.backward(dy);
    g = expand_.backward(bn2_.backward(act2_.backward(g)));
    g = bn1_.backward(act1_.backward(g));
    Mat<T> dh0(g.rows(), g.cols());
    for (std::size_t b = 0; b < bands_.size(); ++b) {
      const Index w = bands_[b].in_channels();
      dh0.middleRows(band_offsets_[b], w) =
          bands_[b].backward(g.middleRows(band_offsets_[b], w));
    }
    Mat<T> dz = squeeze_.backward(bn0_.backward(act0_.backward(dh0)));
    return dy + dz.topRows(feat_dim_);
  }

  StateRefs<T> state() {
    StateRefs<T> s = squeeze_.state();
    s.append(bn0_.state());
    for (auto& b : bands_) s.append(b.state());
    s.append(bn1_.state());
    s.append(expand_.state());
    s.append(bn2_.state());
    s.append(project_.state());
    return s;
  }

 private:
  Index feat_dim_;
  Conv1d<T> squeeze_;
  BatchNorm<T> bn0_;
  ReLU<T> act0_;
  std::vector<Conv1d<T>> bands_;
  std::vector<Index> band_offsets_;
  BatchNorm<T> bn1_;
  ReLU<T> act1_;
  Conv1d<T> expand_;
  BatchNorm<T> bn2_;
  ReLU<T> act2_;
  Conv1d<T> project_;
};

// Magnitude in, one complex ratio mask per track out.
template <typename T>
class Separator {
 public:
  explicit Separator(const SeparatorConfig& c) : cfg_(c), encoder_("sep.encoder", c.input_dim, c.encoder_dim) {
    for (int j = 0; j < c.n_blocks; ++j) {
      const int d = c.dilation_cycle[static_cast<std::size_t>(j) % c.dilation_cycle.size()];
      blocks_.emplace_back("sep.block" + std::to_string(j), c, d);
    }
    for (int i = 0; i < c.tracks; ++i) {
      hidden_.emplace_back("sep.decoder" + std::to_string(i) + ".hidden", c.encoder_dim,
                           c.decoder_dim);
      heads_.emplace_back("sep.decoder" + std::to_string(i) + ".mask", c.decoder_dim,
                          c.mask_dim);
    }
  }

  void init(std::mt19937_64& rng) {
    encoder_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      hidden_[i].init(rng);
      heads_[i].init(rng);
    }
  }

  void set_mode(Mode m) {
    for (auto& b : blocks_) b.set_mode(m);
  }

  std::vector<Mat<T>> forward(const Mat<T>& mag, Index seq_len) {
    if (mag.rows() != cfg_.input_dim)
      throw std::invalid_argument("Separator: expected " + std::to_string(cfg_.input_dim) +
                                  " magnitude bins");
    Mat<T> h = encoder_.forward(mag);
    for (auto& b : blocks_) h = b.forward(h, mag, seq_len);
    std::vector<Mat<T>> masks;
    for (std::size_t i = 0; i < heads_.size(); ++i)
      masks.push_back(heads_[i].forward(hidden_[i].forward(h)));
    return masks;
  }

  void backward(const std::vector<Mat<T>>& d_masks) {
    if (d_masks.size() != heads_.size())
      throw std::invalid_argument("Separator::backward: one gradient per track expected");
    Mat<T> dh;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      Mat<T> g = hidden_[i].backward(heads_[i].backward(d_masks[i]));
      if (i == 0) dh = std::move(g);
      else dh += g;
    }
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh);
    encoder_.backward(dh);
  }

  StateRefs<T> state() {
    StateRefs<T> s = encoder_.state();
    for (auto& b : blocks_) s.append(b.state());
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      s.append(hidden_[i].state());
      s.append(heads_[i].state());
    }
    return s;
  }

  std::vector<Linear<T>>& mask_heads() { return heads_; }

 private:
  SeparatorConfig cfg_;
  Linear<T> encoder_;
  std::vector<MsResBlock<T>> blocks_;
  std::vector<Linear<T>> hidden_, heads_;
};

// ---------------------------------------------------------------------------
// Residual estimator.

// Gated ResBlock:
//   1x1 conv -> BN -> ReLU -> {dilated conv a -> BN, dilated conv b -> BN}
//   -> a * sigmoid(b) -> 1x1 conv -> dropout -> + input
template <typename T>
class GatedResBlock {
 public:
  GatedResBlock(const std::string& name, const ResidualConfig& c, int dilation,
                std::uint64_t dropout_seed)
      : in_(name + ".in", c.feature_dim, c.bottleneck),
        bn_in_(name + ".bn_in", c.bottleneck),
        conv_a_(name + ".conv_a", c.bottleneck, c.bottleneck, c.kernel, dilation),
        bn_a_(name + ".bn_a", c.bottleneck),
        conv_b_(name + ".conv_b", c.bottleneck, c.bottleneck, c.kernel, dilation),
        bn_b_(name + ".bn_b", c.bottleneck),
        out_(name + ".out", c.bottleneck, c.feature_dim),
        dropout_(c.dropout, dropout_seed) {}

  void init(std::mt19937_64& rng) {
    in_.init(rng);
    conv_a_.init(rng);
    conv_b_.init(rng);
    out_.init(rng);
  }

  void set_mode(Mode m) {
    bn_in_.set_mode(m);
    bn_a_.set_mode(m);
    bn_b_.set_mode(m);
    dropout_.set_mode(m);
  }

  Mat<T> forward(const Mat<T>& x, Index seq_len) {
    Mat<T> h = act_.forward(bn_in_.forward(in_.forward(x, seq_len)));
    Mat<T> a = bn_a_.forward(conv_a_.forward(h, seq_len));
    Mat<T> b = bn_b_.forward(conv_b_.forward(h, seq_len));
    return x + dropout_.forward(out_.forward(gate_.forward(a, b), seq_len));
  }

  Mat<T> backward(const Mat<T>& dy) {
    auto [da, db] = gate_.backward(out_.backward(dropout_.backward(dy)));
    Mat<T> dh = conv_a_.backward(bn_a_.backward(da));
    dh += conv_b_.backward(bn_b_.backward(db));
    return dy + in_.backward(bn_in_.backward(act_.backward(dh)));
  }

  StateRefs<T> state() {
    StateRefs<T> s = in_.state();
    s.append(bn_in_.state());
    s.append(conv_a_.state());
    s.append(bn_a_.state());
    s.append(conv_b_.state());
    s.append(bn_b_.state());
    s.append(out_.state());
    return s;
  }

 private:
  Conv1d<T> in_;
  BatchNorm<T> bn_in_;
  ReLU<T> act_;
  Conv1d<T> conv_a_;
  BatchNorm<T> bn_a_;
  Conv1d<T> conv_b_;
  BatchNorm<T> bn_b_;
  Gate<T> gate_;
  Conv1d<T> out_;
  Dropout<T> dropout_;
};

// Maps the packed complex defect (mixture minus separated track) to the
// packed complex residual of that track.
template <typename T>
class ResidualEstimator {
 public:
  ResidualEstimator(const std::string& name, const ResidualConfig& c, std::uint64_t seed)
      : in_(name + ".in", c.input_dim, c.feature_dim), out_(name + ".out", c.feature_dim, c.out_dim) {
    int k = 0;
    for (int r = 0; r < c.repeats; ++r)
      for (int m = 0; m < c.m_blocks; ++m, ++k)
        blocks_.emplace_back(name + ".block" + std::to_string(k), c, 1 << m,
                             mix_seed(seed, static_cast<std::uint64_t>(k)));
  }

  void init(std::mt19937_64& rng) {
    in_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    out_.init(rng);
  }

  void set_mode(Mode m) {
    for (auto& b : blocks_) b.set_mode(m);
  }

  Mat<T> forward(const Mat<T>& defect, Index seq_len) {
    Mat<T> h = in_.forward(defect, seq_len);
    for (auto& b : blocks_) h = b.forward(h, seq_len);
    return out_.forward(h);
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> dh = out_.backward(dy);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh);
    return in_.backward(dh);
  }

  StateRefs<T> state() {
    StateRefs<T> s = in_.state();
    for (auto& b : blocks_) s.append(b.state());
    s.append(out_.state());
    return s;
  }

  Linear<T>& output_head() { return out_; }

 private:
  Conv1d<T> in_;
  std::vector<GatedResBlock<T>> blocks_;
  Linear<T> out_;
};

// ---------------------------------------------------------------------------
// Two-stage model.

template <typename T>
struct ForwardResult {
  std::vector<Mat<T>> masks;      // packed cRM per track
  std::vector<Mat<T>> separated;  // mask * mixture
  std::vector<Mat<T>> residual;   // empty in one-stage mode
  std::vector<Mat<T>> output;     // separated + residual
};

// Y_i = X_i + residual_i(mix - X_i), X_i = mask_i * mix.
template <typename T>
Mat<T> compensate(const Mat<T>& separated, const Mat<T>& residual) {
  if (separated.rows() != residual.rows() || separated.cols() != residual.cols())
    throw std::invalid_argument("compensate: shape mismatch");
  return separated + residual;
}

inline ComplexSpectrogram compensate(const ComplexSpectrogram& separated,
                                     const ComplexSpectrogram& residual) {
  return separated + residual;
}

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, std::uint64_t seed = 0)
      : cfg_(cfg), separator_(cfg.separator) {
    validate(cfg);
    if (cfg.two_stage)
      for (int i = 0; i < cfg.separator.tracks; ++i)
        residuals_.emplace_back("res" + std::to_string(i), cfg.residual,
                                mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    std::mt19937_64 rng(seed);
    separator_.init(rng);
    for (auto& r : residuals_) r.init(rng);
    set_mode(Mode::kTrain);
  }

  const ModelConfig& config() const { return cfg_; }
  bool two_stage() const { return !residuals_.empty(); }
  Mode mode() const { return mode_; }

  void set_mode(Mode m) {
    mode_ = m;
    separator_.set_mode(m);
    for (auto& r : residuals_) r.set_mode(m);
  }

  // mix_ri: packed mixture spectrum, mag: its magnitude; both hold
  // equal-length sequences of seq_len frames back to back.
  ForwardResult<T> forward(const Mat<T>& mix_ri, const Mat<T>& mag, Index seq_len) {
    if (mix_ri.rows() != cfg_.separator.mask_dim || mag.cols() != mix_ri.cols())
      throw std::invalid_argument("Model::forward: input shape mismatch");
    ForwardResult<T> r;
    r.masks = separator_.forward(mag, seq_len);
    for (std::size_t i = 0; i < r.masks.size(); ++i) {
      r.separated.push_back(ri_multiply(r.masks[i], mix_ri));
      if (two_stage()) {
        r.residual.push_back(residuals_[i].forward(mix_ri - r.separated[i], seq_len));
        r.output.push_back(compensate(r.separated[i], r.residual[i]));
      } else {
        r.output.push_back(r.separated[i]);
      }
    }
    mix_ri_ = mix_ri;
    return r;
  }

  // Accumulates parameter gradients from d(loss)/d(output_i).
  void backward(const std::vector<Mat<T>>& d_output) {
    std::vector<Mat<T>> d_masks;
    for (std::size_t i = 0; i < d_output.size(); ++i) {
      Mat<T> d_sep = d_output[i];
      if (two_stage()) d_sep -= residuals_[i].backward(d_output[i]);
      d_masks.push_back(ri_multiply_mask_grad(d_sep, mix_ri_));
    }
    separator_.backward(d_masks);
  }

  StateRefs<T> state() {
    StateRefs<T> s = separator_.state();
    for (auto& r : residuals_) s.append(r.state());
    return s;
  }

  Separator<T>& separator() { return separator_; }
  std::vector<ResidualEstimator<T>>& residuals() { return residuals_; }

  void zero_residual_heads() {
    for (auto& r : residuals_) {
      r.output_head().weight().value().setZero();
      r.output_head().bias().value().setZero();
    }
  }

 private:
  ModelConfig cfg_;
  Separator<T> separator_;
  std::vector<ResidualEstimator<T>> residuals_;
  Mode mode_ = Mode::kTrain;
  Mat<T> mix_ri_;
};

// Time-domain outputs of one mixture: after the separator alone and after
// residual compensation (identical in one-stage mode).
struct Separation {
  std::array<AudioClip, kNumTracks> separator_out;
  std::array<AudioClip, kNumTracks> output;
};

template <typename T>
Separation separate(Model<T>& model, const AudioClip& mixture) {
  const auto& c = model.config();
  if (mixture.sample_rate != c.sample_rate)
    throw std::invalid_argument("separate: mixture must be sampled at " +
                                std::to_string(c.sample_rate) + " Hz");
  Stft stft({static_cast<std::size_t>(c.window), static_cast<std::size_t>(c.hop), true});
  const ComplexSpectrogram mix = stft.forward(mixture);
  const Mat<T> mix_ri = to_ri<T>(mix);
  const Mat<T> mag = ri_magnitude(mix_ri);
  auto r = model.forward(mix_ri, mag, mix_ri.cols());
  if (r.output.size() != kNumTracks)
    throw std::invalid_argument("separate: model must produce three tracks");
  Separation out;
  for (std::size_t i = 0; i < kNumTracks; ++i) {
    out.separator_out[i] = stft.inverse(from_ri(r.separated[i], mix));
    out.output[i] = model.two_stage() ? stft.inverse(from_ri(r.output[i], mix))
                                      : out.separator_out[i];
  }
  return out;
}

// stft -> separator -> residual compensation -> istft, per track.
template <typename T>
std::array<AudioClip, kNumTracks> full_forward(Model<T>& model, const AudioClip& mixture) {
  return separate(model, mixture).output;
}

}  // namespace mtass
