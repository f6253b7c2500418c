// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtass/fft.hpp"
#include "mtass/resample.hpp"
#include "mtass/stft.hpp"
#include "mtass/wav.hpp"
#include "test_util.hpp"

namespace mtass {
namespace {

constexpr double kPi = std::numbers::pi;

AudioClip random_clip(std::uint64_t seed, std::size_t n, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  AudioClip c(std::vector<double>(n), kSampleRate);
  for (double& v : c.samples) v = u(rng);
  return c;
}

// Direct O(N^2) DFT, bins 0..n/2.
std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t) / n);
  return out;
}

// Energy of one frame from its one-sided spectrum (conjugate symmetry).
double two_sided_energy(const std::vector<std::complex<double>>& half, std::size_t n) {
  double e = std::norm(half.front()) + std::norm(half.back());
  for (std::size_t k = 1; k + 1 < half.size(); ++k) e += 2.0 * std::norm(half[k]);
  return e / static_cast<double>(n);
}

std::vector<std::complex<double>> frame_of(const ComplexSpectrogram& s, std::size_t t) {
  return {&s(t, 0), &s(t, 0) + s.bins()};
}

TEST(Fft, MatchesDirectDft) {
  for (std::size_t n : {2u, 8u, 64u, 512u}) {
    const auto x = random_clip(n, n).samples;
    Fft fft(n);
    std::vector<std::complex<double>> got(n / 2 + 1);
    fft.rfft(x, got);
    const auto want = direct_dft(x);
    for (std::size_t k = 0; k <= n / 2; ++k) EXPECT_NEAR(std::abs(got[k] - want[k]), 0.0, 1e-10);
    std::vector<double> back(n);
    fft.irfft(got, back);
    for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(back[t], x[t], 1e-12);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  EXPECT_THROW(Fft(0), std::invalid_argument);
  EXPECT_THROW(Fft(300), std::invalid_argument);
}

TEST(Window, ClosedForm) {
  const auto w = make_window(512);
  ASSERT_EQ(w.size(), 512u);
  EXPECT_EQ(w[0], 0.0);
  for (std::size_t k = 0; k < 512; k += 37)
    EXPECT_NEAR(w[k], std::sqrt(0.5 - 0.5 * std::cos(2.0 * kPi * k / 512.0)), 1e-15);
  EXPECT_NEAR(w[256], 1.0, 1e-15);
}

TEST(Window, ConstantOverlapAdd) {
  const auto w = make_window(512);
  for (std::size_t k = 0; k < 256; ++k) EXPECT_NEAR(w[k] * w[k] + w[k + 256] * w[k + 256], 1.0, 1e-12);
}

TEST(Window, SizeTwoAndZero) {
  const auto w = make_window(2);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0], 0.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0, 1e-15);
  EXPECT_THROW(make_window(0), std::invalid_argument);
}

TEST(Stft, FrameCountAndBins) {
  const auto s = stft(random_clip(1, 16000));
  EXPECT_EQ(s.bins(), 257u);
  EXPECT_EQ(s.frames(), 64u);  // ceil(16000 / 256) + 1
  EXPECT_EQ(s.signal_length(), 16000u);
  const Stft raw({512, 256, false});
  EXPECT_EQ(raw.forward(random_clip(1, 16000)).frames(), 1u + (16000u - 512u) / 256u);
}

TEST(Stft, ZeroSignal) {
  const auto s = stft(AudioClip(std::vector<double>(4000, 0.0), kSampleRate));
  for (const auto& v : s.data()) EXPECT_EQ(std::abs(v), 0.0);
  const auto y = istft(s);
  for (double v : y.samples) EXPECT_EQ(v, 0.0);
}

TEST(Stft, RejectsEmptyAndShortClips) {
  EXPECT_THROW(stft(AudioClip({}, kSampleRate)), std::invalid_argument);
  EXPECT_THROW(stft(AudioClip(std::vector<double>(100, 0.1), kSampleRate)),
               std::invalid_argument);
}

TEST(Stft, FramesMatchDirectDftOfWindowedSegment) {
  const AudioClip x = random_clip(4, 4096);
  const Stft raw({512, 256, false});
  const auto s = raw.forward(x);
  const auto& w = raw.window();
  for (std::size_t t : {std::size_t{0}, std::size_t{3}, s.frames() - 1}) {
    std::vector<double> seg(512);
    for (std::size_t k = 0; k < 512; ++k) seg[k] = x.samples[t * 256 + k] * w[k];
    const auto want = direct_dft(seg);
    for (std::size_t f = 0; f < 257; ++f) EXPECT_NEAR(std::abs(s(t, f) - want[f]), 0.0, 1e-10);
  }
}

// A bin-centred cosine lands in bin 8. Under the sqrt-Hann window its main
// lobe spans bins 7..9, which hold >= 99 % of every frame's energy.
TEST(Stft, CosineConcentratesAtBinEight) {
  std::vector<double> x(8192);
  const double f0 = 8.0 * 16000.0 / 512.0;
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(2.0 * kPi * f0 * n / 16000.0);
  const Stft raw({512, 256, false});
  const auto s = raw.forward(AudioClip(x, kSampleRate));
  for (std::size_t t = 0; t < s.frames(); ++t) {
    const auto fr = frame_of(s, t);
    std::size_t peak = 0;
    for (std::size_t f = 1; f < fr.size(); ++f)
      if (std::abs(fr[f]) > std::abs(fr[peak])) peak = f;
    EXPECT_EQ(peak, 8u);
    const double total = two_sided_energy(fr, 512);
    const double lobe = 2.0 * (std::norm(fr[7]) + std::norm(fr[8]) + std::norm(fr[9])) / 512.0;
    EXPECT_GE(lobe / total, 0.99);
  }
}

TEST(Stft, ImpulseAtCentreOfFirstFrame) {
  std::vector<double> x(1024, 0.0);
  x[256] = 1.0;
  const Stft raw({512, 256, false});
  const auto s = raw.forward(AudioClip(x, kSampleRate));
  const double w256 = raw.window()[256];
  for (std::size_t f = 0; f < 257; ++f) EXPECT_NEAR(std::abs(s(0, f)), w256, 1e-12);
}

TEST(Stft, RoundTrip) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AudioClip x = random_clip(seed, 16000 + 37 * seed);
    const AudioClip y = istft(stft(x));
    ASSERT_EQ(y.size(), x.size());
    double err = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) err = std::max(err, std::abs(y.samples[n] - x.samples[n]));
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Stft, ParsevalPerFrame) {
  const AudioClip x = random_clip(9, 4096);
  const Stft raw({512, 256, false});
  const auto s = raw.forward(x);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    double seg = 0.0;
    for (std::size_t k = 0; k < 512; ++k) {
      const double v = x.samples[t * 256 + k] * raw.window()[k];
      seg += v * v;
    }
    EXPECT_NEAR(two_sided_energy(frame_of(s, t), 512) / seg, 1.0, 1e-6);
  }
}

TEST(Stft, Linearity) {
  const AudioClip a = random_clip(1, 5000), b = random_clip(2, 5000);
  AudioClip sum = a;
  for (std::size_t n = 0; n < sum.size(); ++n) sum.samples[n] += 2.0 * b.samples[n];
  const auto sa = stft(a), sb = stft(b), ss = stft(sum);
  for (std::size_t i = 0; i < ss.size(); ++i)
    EXPECT_NEAR(std::abs(ss.data()[i] - (sa.data()[i] + 2.0 * sb.data()[i])), 0.0, 1e-9);
  const AudioClip y = istft(sa + sb);
  for (std::size_t n = 0; n < y.size(); ++n)
    EXPECT_NEAR(y.samples[n], a.samples[n] + b.samples[n], 1e-9);
}

TEST(Stft, InverseRejectsWrongBinCount) {
  ComplexSpectrogram bad(4, 129, 1024, kSampleRate);
  EXPECT_THROW(istft(bad), std::invalid_argument);
}

// <istft(X), g> == <X, adjoint(g)> with the real inner product over (Re, Im).
TEST(Stft, AdjointInnerProductIdentity) {
  const Stft st;
  const AudioClip x = random_clip(3, 3000);
  ComplexSpectrogram spec = st.forward(x);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : spec.data()) v = {g(rng), g(rng)};
  std::vector<double> grad(x.size());
  for (double& v : grad) v = g(rng);
  const AudioClip y = st.inverse(spec);
  const ComplexSpectrogram adj = st.inverse_adjoint(grad, spec);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) lhs += y.samples[n] * grad[n];
  for (std::size_t i = 0; i < spec.size(); ++i)
    rhs += spec.data()[i].real() * adj.data()[i].real() + spec.data()[i].imag() * adj.data()[i].imag();
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST(Magnitude, Values) {
  ComplexGrid g(2, 3);
  g(0, 0) = {3.0, 4.0};
  const auto m = magnitude(g);
  EXPECT_DOUBLE_EQ(m[0], 5.0);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_EQ(m[i], 0.0);
  const auto s = stft(random_clip(7, 2000));
  const auto ms = magnitude(s);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(ms[i], std::hypot(s.data()[i].real(), s.data()[i].imag()), 1e-7);
}

TEST(ApplyCrm, IdentityAndZeroMasks) {
  const auto mix = stft(random_clip(1, 3000));
  CRMask one(mix.frames(), mix.bins()), zero(mix.frames(), mix.bins());
  for (auto& v : one.data()) v = {1.0, 0.0};
  const auto a = apply_crm(one, mix), b = apply_crm(zero, mix);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    EXPECT_EQ(a.data()[i], mix.data()[i]);
    EXPECT_EQ(std::abs(b.data()[i]), 0.0);
  }
}

TEST(ApplyCrm, ComplexProductAndLinearity) {
  const auto mix = stft(random_clip(1, 3000));
  CRMask m(mix.frames(), mix.bins());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (auto& v : m.data()) v = {g(rng), g(rng)};
  const auto out = apply_crm(m, mix);
  for (std::size_t i = 0; i < mix.size(); i += 101)
    EXPECT_NEAR(std::abs(out.data()[i] - m.data()[i] * mix.data()[i]), 0.0, 1e-12);
  const auto mix2 = stft(random_clip(3, 3000));
  const auto sum = apply_crm(m, mix + mix2), parts = apply_crm(m, mix) + apply_crm(m, mix2);
  for (std::size_t i = 0; i < sum.size(); ++i)
    EXPECT_NEAR(std::abs(sum.data()[i] - parts.data()[i]), 0.0, 1e-9);
}

TEST(ApplyCrm, ShapeMismatch) {
  const auto mix = stft(random_clip(1, 3000));
  EXPECT_THROW(apply_crm(CRMask(mix.frames() + 1, mix.bins()), mix), std::invalid_argument);
}

TEST(ApplyCrm, IdealMaskRecoversTarget) {
  const auto s = stft(random_clip(1, 4000)), n = stft(random_clip(2, 4000));
  const auto mix = s + n;
  const auto out = apply_crm(ideal_crm(s, mix), mix);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(std::abs(out.data()[i] - s.data()[i]), 0.0, 1e-6);
}

TEST(ApplyCrm, IdealMaskZeroWhereMixtureVanishes) {
  const auto s = stft(random_clip(1, 2000));
  const auto mix = s.zeros_like();
  for (const auto& v : ideal_crm(s, mix).data()) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Resample, SameRateIsIdentity) {
  const AudioClip x = random_clip(1, 1000);
  const AudioClip y = resample(x, kSampleRate);
  EXPECT_EQ(y.samples, x.samples);
}

TEST(Resample, OutputLength) {
  for (std::size_t len : {48000u, 44101u, 999u}) {
    AudioClip x(std::vector<double>(len, 0.1), 48000);
    EXPECT_EQ(resample(x, 16000).size(), static_cast<std::size_t>(std::llround(len / 3.0)));
    AudioClip z(std::vector<double>(len, 0.1), 44100);
    EXPECT_EQ(resample(z, 16000).size(),
              static_cast<std::size_t>(std::llround(len * 16000.0 / 44100.0)));
  }
}

TEST(Resample, RejectsBadRate) {
  EXPECT_THROW(resample(random_clip(1, 100), 0), std::invalid_argument);
}

TEST(Resample, TonePeakStaysAtOneKilohertz) {
  std::vector<double> x(48000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = 0.5 * std::sin(2.0 * kPi * 1000.0 * n / 48000.0);
  const AudioClip y = resample(AudioClip(x, 48000), 16000);
  ASSERT_EQ(y.sample_rate, 16000);
  const std::size_t n = 4096;
  std::vector<double> seg(y.samples.begin() + 4000, y.samples.begin() + 4000 + n);
  const auto spec = direct_dft(seg);
  std::size_t peak = 0;
  for (std::size_t k = 1; k < spec.size(); ++k)
    if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
  const double bin_hz = 16000.0 / n;
  EXPECT_LE(std::abs(peak * bin_hz - 1000.0), bin_hz);
}

TEST(Resample, PreservesDc) {
  const AudioClip y = resample(AudioClip(std::vector<double>(44100, 0.5), 44100), 16000);
  for (std::size_t n = 200; n + 200 < y.size(); ++n) EXPECT_NEAR(y.samples[n], 0.5, 1e-3);
}

// A 10 kHz tone cannot be represented at 16 kHz; whatever aliases through
// must be at least 60 dB below the input.
TEST(Resample, AliasRejection) {
  std::vector<double> x(48000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = 0.5 * std::sin(2.0 * kPi * 10000.0 * n / 48000.0);
  const AudioClip y = resample(AudioClip(x, 48000), 16000);
  double ein = 0.0, eout = 0.0;
  for (std::size_t n = 1000; n + 1000 < x.size(); ++n) ein += x[n] * x[n];
  for (std::size_t n = 400; n + 400 < y.size(); ++n) eout += y.samples[n] * y.samples[n];
  ein /= static_cast<double>(x.size() - 2000);
  eout /= static_cast<double>(y.size() - 800);
  EXPECT_LT(10.0 * std::log10(eout / ein), -60.0);
}

class WavTest : public ::testing::Test {
 protected:
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  testing::TempDir dir_;
};

TEST_F(WavTest, Float32RoundTrip) {
  const AudioClip x = random_clip(1, 1234, 0.9);
  write_wav(path("a.wav"), x, WavFormat::kFloat32);
  const AudioClip y = read_wav(path("a.wav"));
  EXPECT_EQ(y.sample_rate, kSampleRate);
  ASSERT_EQ(y.size(), x.size());
  for (std::size_t n = 0; n < x.size(); ++n)
    EXPECT_EQ(y.samples[n], static_cast<double>(static_cast<float>(x.samples[n])));
}

TEST_F(WavTest, Pcm16RoundTrip) {
  const AudioClip x = random_clip(2, 1000, 0.9);
  write_wav(path("b.wav"), x, WavFormat::kPcm16);
  const AudioClip y = read_wav(path("b.wav"));
  ASSERT_EQ(y.size(), x.size());
  for (std::size_t n = 0; n < x.size(); ++n) EXPECT_NEAR(y.samples[n], x.samples[n], 1.0 / 32767.0);
}

TEST_F(WavTest, RejectsStereo) {
  // 44-byte canonical header, 2 channels, 16-bit PCM, 4 frames.
  std::string h = "RIFF";
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) h += static_cast<char>((v >> (8 * i)) & 0xff); };
  auto u16 = [&](std::uint16_t v) { for (int i = 0; i < 2; ++i) h += static_cast<char>((v >> (8 * i)) & 0xff); };
  u32(36 + 16);
  h += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(2);
  u32(16000);
  u32(16000 * 4);
  u16(4);
  u16(16);
  h += "data";
  u32(16);
  h += std::string(16, '\0');
  std::ofstream(path("stereo.wav"), std::ios::binary) << h;
  try {
    read_wav(path("stereo.wav"));
    FAIL() << "stereo file accepted";
  } catch (const WavError& e) {
    EXPECT_NE(std::string(e.what()).find("mono"), std::string::npos);
  }
}

TEST_F(WavTest, MissingAndGarbageFiles) {
  EXPECT_THROW(read_wav(path("nope.wav")), WavError);
  std::ofstream(path("junk.wav"), std::ios::binary) << "not a wav file at all, definitely";
  EXPECT_THROW(read_wav(path("junk.wav")), WavError);
}

}  // namespace
}  // namespace mtass
