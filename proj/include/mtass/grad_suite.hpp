// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtass/grad_check.hpp"
#include "mtass/layers.hpp"
#include "mtass/loss.hpp"
#include "mtass/model.hpp"

// Finite-difference checks of every layer kernel and of the end-to-end
// tiny model loss, all in double precision.

namespace mtass {

struct GradSuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst;
  std::size_t checked = 0;
  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

namespace detail {

inline Mat<double> random_mat(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Gaussian input bounded away from 0 so that no ReLU sits on its kink.
inline Mat<double> away_from_zero(Index r, Index c, std::mt19937_64& rng) {
  Mat<double> m = random_mat(r, c, rng);
  for (Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    v = v >= 0 ? v + 0.1 : v - 0.1;
  }
  return m;
}

inline void randomize(Tensor<double>& t, std::mt19937_64& rng, double offset = 0.0) {
  t.value() = random_mat(t.value().rows(), t.value().cols(), rng, 0.5).array() + offset;
}

// Loss sum(R .* y) for a fixed random projection R, so d loss / d y = R.
struct Projection {
  Mat<double> r;
  double operator()(const Mat<double>& y) const { return (r.array() * y.array()).sum(); }
};

}  // namespace detail

inline GradSuiteResult check_linear(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  Linear<double> layer("linear", 5, 4);
  layer.init(rng);
  Tensor<double> x("x", {5, 7});
  x.value() = detail::random_mat(5, 7, rng);
  const detail::Projection p{detail::random_mat(4, 7, rng)};
  auto rep = grad_check([&] { return p(layer.forward(x.value())); },
                        [&] {
                          layer.forward(x.value());
                          x.grad() = layer.backward(p.r);
                        },
                        {&layer.weight(), &layer.bias(), &x}, o);
  return {"linear", rep.max_rel_error, 1e-4, rep.worst, rep.checked};
}

inline GradSuiteResult check_conv(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  const Index seq = 11;
  Conv1d<double> layer("conv", 3, 4, 3, 4);
  layer.init(rng);
  Tensor<double> x("x", {3, 2 * seq});
  x.value() = detail::random_mat(3, 2 * seq, rng);
  const detail::Projection p{detail::random_mat(4, 2 * seq, rng)};
  auto rep = grad_check([&] { return p(layer.forward(x.value(), seq)); },
                        [&] {
                          layer.forward(x.value(), seq);
                          x.grad() = layer.backward(p.r);
                        },
                        {&layer.weight(), &layer.bias(), &x}, o);
  return {"dilated_conv", rep.max_rel_error, 1e-4, rep.worst, rep.checked};
}

inline GradSuiteResult check_batchnorm(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  BatchNorm<double> layer("bn", 4);
  detail::randomize(layer.gamma(), rng, 1.0);
  detail::randomize(layer.beta(), rng);
  Tensor<double> x("x", {4, 12});
  x.value() = detail::random_mat(4, 12, rng, 2.0);
  const detail::Projection p{detail::random_mat(4, 12, rng)};
  auto rep = grad_check([&] { return p(layer.forward(x.value())); },
                        [&] {
                          layer.forward(x.value());
                          x.grad() = layer.backward(p.r);
                        },
                        {&layer.gamma(), &layer.beta(), &x}, o);
  return {"batch_norm", rep.max_rel_error, 1e-3, rep.worst, rep.checked};
}

inline GradSuiteResult check_gate(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  Gate<double> gate;
  Tensor<double> a("a", {4, 6}), b("b", {4, 6});
  a.value() = detail::random_mat(4, 6, rng);
  b.value() = detail::random_mat(4, 6, rng, 2.0);
  const detail::Projection p{detail::random_mat(4, 6, rng)};
  auto rep = grad_check([&] { return p(gate.forward(a.value(), b.value())); },
                        [&] {
                          gate.forward(a.value(), b.value());
                          auto [da, db] = gate.backward(p.r);
                          a.grad() = da;
                          b.grad() = db;
                        },
                        {&a, &b}, o);
  return {"gating", rep.max_rel_error, 1e-4, rep.worst, rep.checked};
}

inline GradSuiteResult check_relu(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  ReLU<double> relu;
  Tensor<double> x("x", {4, 6});
  x.value() = detail::away_from_zero(4, 6, rng);
  const detail::Projection p{detail::random_mat(4, 6, rng)};
  auto rep = grad_check([&] { return p(relu.forward(x.value())); },
                        [&] {
                          relu.forward(x.value());
                          x.grad() = relu.backward(p.r);
                        },
                        {&x}, o);
  return {"relu", rep.max_rel_error, 1e-4, rep.worst, rep.checked};
}

// Eval-mode dropout, the path that runs at inference.
inline GradSuiteResult check_dropout_off(std::uint64_t seed, const GradCheckOptions& o = {}) {
  std::mt19937_64 rng(seed);
  Dropout<double> drop(0.5, seed);
  drop.set_mode(Mode::kEval);
  Tensor<double> x("x", {4, 6});
  x.value() = detail::random_mat(4, 6, rng);
  const detail::Projection p{detail::random_mat(4, 6, rng)};
  auto rep = grad_check([&] { return p(drop.forward(x.value())); },
                        [&] {
                          drop.forward(x.value());
                          x.grad() = drop.backward(p.r);
                        },
                        {&x}, o);
  return {"dropout_off", rep.max_rel_error, 1e-4, rep.worst, rep.checked};
}

// Small two-block model for the end-to-end check: tiny widths, dropout off,
// short input.
inline ModelConfig grad_check_config() {
  ModelConfig c = tiny_config();
  c.separator.encoder_dim = 16;
  c.separator.ms_channels = {16, 16, 16};
  c.separator.subbands = 4;
  c.separator.decoder_dim = 16;
  c.residual.feature_dim = 8;
  c.residual.bottleneck = 4;
  c.residual.dropout = 0.0;
  return c;
}

// Multi-domain loss of the full two-stage pipeline on a random clip, with
// respect to a random subset of every parameter tensor.
inline GradSuiteResult check_end_to_end(std::uint64_t seed, GradCheckOptions o = {}) {
  if (o.max_per_tensor == 0) o.max_per_tensor = 3;
  const ModelConfig cfg = grad_check_config();
  Model<double> model(cfg, seed);
  std::mt19937_64 rng(seed);
  const Stft stft;
  auto clip = [&] {
    std::normal_distribution<double> g(0.0, 0.1);
    AudioClip c(std::vector<double>(2048), kSampleRate);
    for (double& v : c.samples) v = g(rng);
    return c;
  };
  std::vector<AudioClip> refs{clip(), clip(), clip()};
  AudioClip mixture = refs[0];
  for (std::size_t n = 0; n < mixture.size(); ++n)
    mixture.samples[n] += refs[1].samples[n] + refs[2].samples[n];
  const ComplexSpectrogram mix = stft.forward(mixture);
  std::vector<ComplexSpectrogram> s_ri;
  for (const auto& r : refs) s_ri.push_back(stft.forward(r));
  const Mat<double> mix_ri = to_ri<double>(mix);
  const Mat<double> mag = ri_magnitude(mix_ri);
  const LossWeights w{cfg.alpha};

  auto outputs = [&] {
    auto r = model.forward(mix_ri, mag, mix_ri.cols());
    std::vector<ComplexSpectrogram> y;
    for (const auto& o : r.output) y.push_back(from_ri(o, mix));
    return y;
  };
  auto loss = [&] { return multi_domain_loss_grad(outputs(), s_ri, refs, w, stft).parts.total; };
  auto analytic = [&] {
    const auto lg = multi_domain_loss_grad(outputs(), s_ri, refs, w, stft);
    std::vector<Mat<double>> d;
    for (const auto& g : lg.d_y) d.push_back(to_ri<double>(g));
    model.backward(d);
  };
  auto params = model.state().params;
  auto rep = grad_check(loss, analytic, params, o);
  return {"end_to_end_tiny", rep.max_rel_error, 1e-3, rep.worst, rep.checked};
}

inline std::vector<GradSuiteResult> run_grad_suite(std::uint64_t seed = 0) {
  GradCheckOptions o;
  o.seed = seed;
  return {check_linear(seed, o),    check_conv(seed, o),        check_batchnorm(seed, o),
          check_gate(seed, o),      check_relu(seed, o),        check_dropout_off(seed, o),
          check_end_to_end(seed, o)};
}

}  // namespace mtass
