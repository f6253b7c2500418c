// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mtass/checkpoint.hpp"
#include "mtass/complexity.hpp"
#include "mtass/grad_suite.hpp"
#include "mtass/model.hpp"
#include "mtass/synth.hpp"
#include "test_util.hpp"

namespace mtass {
namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
Mat<T> random_ri(Index frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat<T> m(514, frames);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(g(rng));
  return m;
}

// Small widths, real depth.
ModelConfig narrow(int n_blocks, int m_blocks, int repeats) {
  ModelConfig c = grad_check_config();
  c.separator.n_blocks = n_blocks;
  c.residual.m_blocks = m_blocks;
  c.residual.repeats = repeats;
  return c;
}

TEST(Config, SubbandSplit) {
  const auto w = subband_widths(257, 8);
  ASSERT_EQ(w.size(), 8u);
  for (int k = 0; k < 7; ++k) EXPECT_EQ(w[static_cast<std::size_t>(k)], 33);
  EXPECT_EQ(w[7], 26);
  EXPECT_THROW(subband_widths(4, 8), std::invalid_argument);
}

TEST(Config, FullDefaults) {
  const ModelConfig c = full_config();
  EXPECT_EQ(c.separator.encoder_dim, 1024);
  EXPECT_EQ(c.separator.n_blocks, 15);
  EXPECT_EQ(c.separator.ms_channels, (std::array<int, 3>{257, 514, 1024}));
  EXPECT_EQ(c.separator.subbands, 8);
  EXPECT_EQ(c.separator.dilation_cycle, (std::vector<int>{1, 3, 5, 7, 11}));
  EXPECT_EQ(c.separator.mask_dim, 514);
  EXPECT_EQ(c.residual.feature_dim, 256);
  EXPECT_EQ(c.residual.bottleneck, 64);
  EXPECT_EQ(c.residual.m_blocks, 8);
  EXPECT_EQ(c.residual.repeats, 5);
  EXPECT_EQ(c.residual.out_dim, 514);
}

TEST(Config, JsonRoundTrip) {
  ModelConfig c = tiny_config();
  c.alpha = 0.02;
  c.two_stage = false;
  c.residual.dropout = 0.25;
  const ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, Validation) {
  ModelConfig c = tiny_config();
  c.separator.mask_dim = 500;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = tiny_config();
  c.residual.kernel = 4;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = tiny_config();
  c.residual.dropout = 1.0;
  EXPECT_THROW(Model<float>(c, 0), std::invalid_argument);
}

TEST(Packing, RiRoundTripAndComplexProduct) {
  const Stft st;
  AudioClip x = synth::noise_like(1, 0.2);
  const ComplexSpectrogram s = st.forward(x);
  const Mat<double> ri = to_ri<double>(s);
  EXPECT_EQ(ri.rows(), 514);
  const ComplexSpectrogram back = from_ri(ri, s);
  EXPECT_EQ(back.data(), s.data());
  const Mat<double> mask = random_ri<double>(ri.cols(), 2);
  const ComplexSpectrogram prod = from_ri(ri_multiply(mask, ri), s);
  const ComplexSpectrogram m = from_ri(mask, s);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(std::abs(prod.data()[i] - m.data()[i] * s.data()[i]), 0.0, 1e-12);
  const Mat<double> mag = ri_magnitude(ri);
  for (std::size_t i = 0; i < s.size(); i += 53)
    EXPECT_NEAR(mag(static_cast<Index>(i % 257), static_cast<Index>(i / 257)), std::abs(s.data()[i]), 1e-12);
}

TEST(Model, OutputShapes) {
  Model<float> model(tiny_config(), 1);
  const Mat<float> mix = random_ri<float>(20, 3);
  const auto r = model.forward(mix, ri_magnitude(mix), 20);
  ASSERT_EQ(r.masks.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.masks[i].rows(), 514);
    EXPECT_EQ(r.masks[i].cols(), 20);
    EXPECT_EQ(r.separated[i].rows(), 514);
    EXPECT_EQ(r.residual[i].cols(), 20);
    EXPECT_EQ(r.output[i].cols(), 20);
  }
  EXPECT_THROW(model.forward(Mat<float>::Zero(512, 20), Mat<float>::Zero(257, 20), 20),
               std::invalid_argument);
  EXPECT_THROW(model.forward(mix, Mat<float>::Zero(257, 19), 20), std::invalid_argument);
}

TEST(Model, ZeroDecoderGivesZeroTracks) {
  Model<double> model(narrow(2, 2, 1), 1);
  for (auto& head : model.separator().mask_heads()) {
    head.weight().value().setZero();
    head.bias().value().setZero();
  }
  model.set_mode(Mode::kEval);
  const Mat<double> mix = random_ri<double>(16, 3);
  const auto r = model.forward(mix, ri_magnitude(mix), 16);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.masks[i].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.separated[i].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Model, EvalModeIsDeterministic) {
  Model<float> a(tiny_config(), 7), b(tiny_config(), 7);
  a.set_mode(Mode::kEval);
  b.set_mode(Mode::kEval);
  const Mat<float> mix = random_ri<float>(30, 4);
  const Mat<float> mag = ri_magnitude(mix);
  const auto r1 = a.forward(mix, mag, 30);
  const auto r2 = a.forward(mix, mag, 30);
  const auto r3 = b.forward(mix, mag, 30);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r1.output[i], r2.output[i]);
    EXPECT_EQ(r1.output[i], r3.output[i]);
  }
}

TEST(Model, BatchedSequencesMatchSeparateRuns) {
  Model<double> model(narrow(2, 3, 1), 2);
  model.set_mode(Mode::kEval);
  const Mat<double> a = random_ri<double>(12, 1), b = random_ri<double>(12, 2);
  Mat<double> both(514, 24);
  both << a, b;
  const auto ra = model.forward(a, ri_magnitude(a), 12);
  const auto rb = model.forward(b, ri_magnitude(b), 12);
  const auto r = model.forward(both, ri_magnitude(both), 12);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT((r.output[i].leftCols(12) - ra.output[i]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.output[i].rightCols(12) - rb.output[i]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MsResBlock, ZeroConvolutionsGiveIdentity) {
  const SeparatorConfig c = tiny_config().separator;
  MsResBlock<double> block("b", c, 3);
  std::mt19937_64 rng(1);
  block.init(rng);
  for (auto* p : block.state().params)
    if (ends_with(p->name(), ".weight") || ends_with(p->name(), ".bias")) p->value().setZero();
  const Mat<double> x = detail::random_mat(c.encoder_dim, 9, rng);
  const Mat<double> mag = detail::random_mat(257, 9, rng).cwiseAbs();
  EXPECT_EQ(block.forward(x, mag, 9), x);
}

TEST(MsResBlock, ShapeClosure) {
  const SeparatorConfig c = tiny_config().separator;
  MsResBlock<double> block("b", c, 5);
  std::mt19937_64 rng(2);
  block.init(rng);
  for (Index t : {3, 17}) {
    const Mat<double> x = detail::random_mat(c.encoder_dim, t, rng);
    const Mat<double> y = block.forward(x, detail::random_mat(257, t, rng), t);
    EXPECT_EQ(y.rows(), x.rows());
    EXPECT_EQ(y.cols(), t);
  }
  EXPECT_THROW(block.forward(Mat<double>::Zero(c.encoder_dim + 1, 4), Mat<double>::Zero(257, 4), 4),
               std::invalid_argument);
}

TEST(ResidualEstimator, ZeroHeadAndShape) {
  ResidualConfig c = tiny_config().residual;
  ResidualEstimator<double> res("r", c, 1);
  std::mt19937_64 rng(3);
  res.init(rng);
  const Mat<double> x = random_ri<double>(15, 4);
  const Mat<double> y = res.forward(x, 15);
  EXPECT_EQ(y.rows(), 514);
  EXPECT_EQ(y.cols(), 15);
  res.output_head().weight().value().setZero();
  res.output_head().bias().value().setZero();
  EXPECT_EQ(res.forward(x, 15).cwiseAbs().maxCoeff(), 0.0);
}

// Frames of the output that react to a perturbation of one input frame.
// With non-negative weights, shifts and input every pre-activation stays
// positive, so no ReLU cuts a path and no contributions cancel. Frames
// outside the reach are computed from identical inputs, so any nonzero
// difference counts; the far edge can be tiny after many chained taps.
template <typename Net, typename Fwd>
std::pair<Index, Index> reach(Net& net, Fwd fwd, Index rows, Index frames, Index t0) {
  for (auto* p : net.state().params) p->value() = p->value().cwiseAbs();
  net.set_mode(Mode::kEval);
  std::mt19937_64 rng(5);
  const Mat<double> x = detail::random_mat(rows, frames, rng).cwiseAbs();
  Mat<double> x2 = x;
  x2.col(t0).array() += 1.0;
  const Mat<double> d = fwd(x2) - fwd(x);
  Index lo = frames, hi = -1;
  for (Index t = 0; t < frames; ++t)
    if (d.col(t).cwiseAbs().maxCoeff() != 0.0) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  return {t0 - lo, hi - t0};
}

TEST(ReceptiveField, SeparatorImpulse) {
  ModelConfig c = narrow(15, 1, 1);
  c.separator.ms_channels = {16, 16, 16};
  const std::int64_t rf = separator_receptive_field(c.separator);
  EXPECT_EQ(rf, 1 + 2 * 3 * (1 + 3 + 5 + 7 + 11));
  Separator<double> sep(c.separator);
  std::mt19937_64 rng(1);
  sep.init(rng);
  const Index frames = 240, t0 = 120;
  const auto [left, right] = reach(sep, [&](const Mat<double>& m) { return sep.forward(m, frames)[0]; },
                                   257, frames, t0);
  EXPECT_EQ(left, (rf - 1) / 2);
  EXPECT_EQ(right, (rf - 1) / 2);
}

TEST(ReceptiveField, ResidualImpulse) {
  EXPECT_EQ(residual_receptive_field(full_config().residual), 1 + 2 * 5 * 255);
  ResidualConfig c = grad_check_config().residual;
  c.m_blocks = 3;
  c.repeats = 2;
  const std::int64_t rf = residual_receptive_field(c);
  EXPECT_EQ(rf, 1 + 2 * 2 * 7);
  ResidualEstimator<double> res("r", c, 1);
  std::mt19937_64 rng(2);
  res.init(rng);
  const Index frames = 64, t0 = 30;
  const auto [left, right] =
      reach(res, [&](const Mat<double>& m) { return res.forward(m, frames); }, 514, frames, t0);
  EXPECT_EQ(left, (rf - 1) / 2);
  EXPECT_EQ(right, (rf - 1) / 2);
}

TEST(Compensate, Identities) {
  const Stft st;
  const ComplexSpectrogram x = st.forward(synth::music_like(1, 0.3));
  const ComplexSpectrogram s = st.forward(synth::speech_like(2, 0.3));
  const ComplexSpectrogram zero = x.zeros_like();
  EXPECT_EQ(compensate(x, zero).data(), x.data());
  const ComplexSpectrogram ideal = compensate(x, s - x);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(std::abs(ideal.data()[i] - s.data()[i]), 0.0, 1e-12);
  const Mat<double> a = random_ri<double>(5, 1), r = random_ri<double>(5, 2);
  EXPECT_LT((compensate(a, r) - a - r).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_THROW(compensate(a, random_ri<double>(6, 2)), std::invalid_argument);
}

TEST(Compensate, ZeroResidualHeadsGiveSeparatorOutput) {
  Model<float> model(tiny_config(), 3);
  model.zero_residual_heads();
  model.set_mode(Mode::kEval);
  const AudioClip mix = synth::noise_like(3, 1.0);
  const Separation s = separate(model, mix);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.output[i].samples, s.separator_out[i].samples);
}

TEST(FullForward, LengthsMatchInput) {
  Model<float> model(tiny_config(), 4);
  model.set_mode(Mode::kEval);
  for (double secs : {0.5, 1.337}) {
    const AudioClip mix = synth::noise_like(5, secs);
    for (const auto& y : full_forward(model, mix)) EXPECT_EQ(y.size(), mix.size());
  }
  AudioClip wrong = synth::noise_like(5, 0.5, 8000);
  EXPECT_THROW(full_forward(model, wrong), std::invalid_argument);
}

TEST(FullForward, IdealMasksRecoverReferences) {
  const Stft st;
  const AudioClip refs[3] = {synth::speech_like(1, 1.0), synth::music_like(2, 1.0), synth::noise_like(3, 1.0)};
  AudioClip mix = refs[0];
  for (std::size_t n = 0; n < mix.size(); ++n) mix.samples[n] += refs[1].samples[n] + refs[2].samples[n];
  const ComplexSpectrogram m = st.forward(mix);
  const Mat<double> mix_ri = to_ri<double>(m);
  for (int i = 0; i < 3; ++i) {
    const Mat<double> mask = to_ri<double>(ideal_crm(st.forward(refs[i]), m));
    const Mat<double> sep = ri_multiply(mask, mix_ri);
    const AudioClip y = st.inverse(from_ri(compensate(sep, Mat<double>::Zero(514, sep.cols()).eval()), m));
    double err = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) err = std::max(err, std::abs(y.samples[n] - refs[i].samples[n]));
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Complexity, EmptyAndSingleLayer) {
  ModelConfig c;
  c.separator.encoder_dim = 0;
  c.separator.n_blocks = 0;
  c.separator.tracks = 0;
  c.two_stage = false;
  EXPECT_EQ(count_params(c), 0);
  EXPECT_EQ(count_macs(c), 0);
  c.separator.encoder_dim = 1024;
  EXPECT_EQ(count_params(c), 257 * 1024 + 1024);
  EXPECT_EQ(count_macs_frames(c, 62), std::int64_t{62} * 257 * 1024);
  EXPECT_EQ(count_macs_frames(c, 124), 2 * count_macs_frames(c, 62));
  EXPECT_EQ(count_macs(c, 2.0), 2 * count_macs(c, 1.0));
  EXPECT_EQ(count_macs(c, 1.0), std::llround(62.5 * 257 * 1024));
}

TEST(Complexity, FullScaleWithinTolerance) {
  const ModelConfig c = full_config();
  EXPECT_NEAR(static_cast<double>(count_params(c)), 28.18e6, 0.2 * 28.18e6);
  EXPECT_NEAR(static_cast<double>(count_macs(c)), 1.8e9, 0.3 * 1.8e9);
}

TEST(Complexity, MatchesInstantiatedModels) {
  for (ModelConfig c : {tiny_config(), narrow(3, 2, 2), full_config()}) {
    Model<float> model(c, 0);
    EXPECT_EQ(model.state().num_params(), count_params(c));
    c.two_stage = false;
    Model<float> one(c, 0);
    EXPECT_EQ(one.state().num_params(), count_params(c));
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir;
  Model<float> model(tiny_config(), 9);
  // Move the batch-norm statistics off their defaults.
  const Mat<float> warm = random_ri<float>(40, 1);
  model.forward(warm, ri_magnitude(warm), 20);
  model.set_mode(Mode::kEval);
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(path, model);
  auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(to_json(loaded->config()), to_json(model.config()));
  EXPECT_EQ(loaded->mode(), Mode::kEval);
  const AudioClip mix = synth::music_like(4, 1.0);
  const auto a = full_forward(model, mix), b = full_forward(*loaded, mix);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].samples, b[i].samples);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  testing::TempDir dir;
  const std::string bad = (dir / "bad.ckpt").string();
  std::ofstream(bad, std::ios::binary) << "NOPE....";
  EXPECT_THROW(load_checkpoint<float>(bad), CheckpointError);
  Model<float> model(tiny_config(), 1);
  const std::string good = (dir / "good.ckpt").string();
  save_checkpoint(good, model);
  const std::string bytes = testing::slurp(good);
  const std::string cut = (dir / "cut.ckpt").string();
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint<float>(cut), CheckpointError);
  std::string v2 = bytes;
  v2[4] = 2;
  const std::string ver = (dir / "v2.ckpt").string();
  std::ofstream(ver, std::ios::binary) << v2;
  EXPECT_THROW(load_checkpoint<float>(ver), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>((dir / "missing.ckpt").string()), CheckpointError);
}

TEST(Checkpoint, HeaderLayout) {
  testing::TempDir dir;
  Model<float> model(tiny_config(), 1);
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(path, model);
  const std::string bytes = testing::slurp(path);
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 4), "MTAS");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  const std::uint32_t len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8) |
                            (static_cast<unsigned char>(bytes[10]) << 16);
  const auto header = nlohmann::json::parse(bytes.substr(12, len));
  EXPECT_EQ(header.at("version"), 1);
  std::int64_t values = 0;
  auto s = model.state();
  for (auto* t : s.params) values += t->numel();
  for (auto* t : s.buffers) values += t->numel();
  EXPECT_EQ(bytes.size(), 12u + len + 8u + 4u * static_cast<std::size_t>(values));
}

TEST(EndToEndGradient, TwoBlockTinyModel) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = check_end_to_end(seed);
    EXPECT_TRUE(r.passed()) << "seed " << seed << " rel err " << r.max_rel_error << " at " << r.worst;
  }
}

}  // namespace
}  // namespace mtass
