// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "mtass/audio.hpp"
#include "mtass/tensor.hpp"

// Forward/backward layer kernels. Each layer caches what its backward pass
// needs during forward(); backward() accumulates parameter gradients and
// returns the gradient with respect to the layer input. One graph per layer
// instance at a time: forward, then at most one backward.

namespace mtass {

namespace detail {
inline void check_rows(Index got, Index want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) +
                                " input channels, got " + std::to_string(got));
}
}  // namespace detail

// y = W x + b per frame. W is [out, in].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out)
      : weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

  Index in_features() const { return weight_.value().cols(); }
  Index out_features() const { return weight_.value().rows(); }

  void init(std::mt19937_64& rng) {
    kaiming_uniform(weight_, in_features(), rng);
    bias_uniform(bias_, in_features(), rng);
  }

  Mat<T> forward(const Mat<T>& x) {
    detail::check_rows(x.rows(), in_features(), "Linear");
    x_ = x;
    Mat<T> y = weight_.value() * x;
    y.colwise() += bias_.value().col(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (dy.rows() != out_features() || dy.cols() != x_.cols())
      throw std::invalid_argument("Linear::backward: gradient shape mismatch");
    weight_.grad().noalias() += dy * x_.transpose();
    bias_.grad().col(0) += dy.rowwise().sum();
    return weight_.value().transpose() * dy;
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  StateRefs<T> state() { return {{&weight_, &bias_}, {}}; }

 private:
  Tensor<T> weight_, bias_;
  Mat<T> x_;
};

// Dilated 1-D cross-correlation with symmetric zero padding of
// (k-1)*dilation/2 frames per side, applied independently to each
// `seq_len`-frame segment of the input. Kernel [c_out, c_in, k] is stored
// as c_out x (k * c_in) with tap j in columns [j*c_in, (j+1)*c_in).
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, Index c_in, Index c_out, Index kernel = 1,
         Index dilation = 1)
      : weight_(name + ".weight", {c_out, c_in, kernel}),
        bias_(name + ".bias", {c_out}),
        c_in_(c_in),
        kernel_(kernel),
        dilation_(dilation) {
    if (kernel % 2 == 0) throw std::invalid_argument("Conv1d: kernel size must be odd");
    if (dilation < 1) throw std::invalid_argument("Conv1d: dilation must be >= 1");
  }

  Index in_channels() const { return c_in_; }
  Index out_channels() const { return weight_.value().rows(); }
  Index kernel() const { return kernel_; }
  Index dilation() const { return dilation_; }

  void init(std::mt19937_64& rng) {
    kaiming_uniform(weight_, c_in_ * kernel_, rng);
    bias_uniform(bias_, c_in_ * kernel_, rng);
  }

  Mat<T> forward(const Mat<T>& x, Index seq_len) {
    detail::check_rows(x.rows(), c_in_, "Conv1d");
    check_segments(x.cols(), seq_len);
    x_ = x;
    seq_len_ = seq_len;
    Mat<T> y(out_channels(), x.cols());
    y.colwise() = bias_.value().col(0);
    if (kernel_ == 1) {
      y.noalias() += weight_.value() * x;
      return y;
    }
    for_each_tap(x.cols(), [&](Index j, Index dst, Index src, Index n) {
      y.middleCols(dst, n).noalias() +=
          weight_.value().middleCols(j * c_in_, c_in_) * x.middleCols(src, n);
    });
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (dy.rows() != out_channels() || dy.cols() != x_.cols())
      throw std::invalid_argument("Conv1d::backward: gradient shape mismatch");
    bias_.grad().col(0) += dy.rowwise().sum();
    if (kernel_ == 1) {
      weight_.grad().noalias() += dy * x_.transpose();
      return weight_.value().transpose() * dy;
    }
    Mat<T> dx = Mat<T>::Zero(c_in_, x_.cols());
    for_each_tap(x_.cols(), [&](Index j, Index dst, Index src, Index n) {
      weight_.grad().middleCols(j * c_in_, c_in_).noalias() +=
          dy.middleCols(dst, n) * x_.middleCols(src, n).transpose();
      dx.middleCols(src, n).noalias() +=
          weight_.value().middleCols(j * c_in_, c_in_).transpose() * dy.middleCols(dst, n);
    });
    return dx;
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  StateRefs<T> state() { return {{&weight_, &bias_}, {}}; }

 private:
  void check_segments(Index cols, Index seq_len) const {
    if (seq_len <= 0 || cols % seq_len != 0)
      throw std::invalid_argument("Conv1d: frame count is not a multiple of seq_len");
  }

  // Calls fn(tap, dst_col, src_col, count) for every valid (output, input)
  // column run of every tap within every segment.
  template <typename Fn>
  void for_each_tap(Index cols, Fn&& fn) const {
    const Index half = (kernel_ - 1) / 2;
    const Index len = seq_len_;
    for (Index seg = 0; seg < cols; seg += len) {
      for (Index j = 0; j < kernel_; ++j) {
        const Index off = (j - half) * dilation_;
        const Index t0 = std::max<Index>(0, -off);
        const Index t1 = std::min<Index>(len, len - off);
        if (t1 > t0) fn(j, seg + t0, seg + t0 + off, t1 - t0);
      }
    }
  }

  Tensor<T> weight_, bias_;
  Index c_in_ = 0, kernel_ = 1, dilation_ = 1;
  Mat<T> x_;
  Index seq_len_ = 0;
};

// Per-channel normalisation over all frames of the batch.
// running = momentum * running + (1 - momentum) * batch statistic.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, Index channels, double momentum = 0.9,
            double eps = 1e-5)
      : gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_(name + ".running_mean", {channels}, false),
        running_var_(name + ".running_var", {channels}, false),
        momentum_(momentum),
        eps_(eps) {
    gamma_.value().setOnes();
    running_var_.value().setOnes();
  }

  Index channels() const { return gamma_.value().rows(); }
  void set_mode(Mode m) { mode_ = m; }
  Mode mode() const { return mode_; }

  Mat<T> forward(const Mat<T>& x) {
    detail::check_rows(x.rows(), channels(), "BatchNorm");
    const Index n = x.cols();
    Vec<T> mean, var;
    if (mode_ == Mode::kTrain) {
      if (n < 2) throw DegenerateInput("BatchNorm: need at least 2 frames in train mode");
      mean = x.rowwise().mean();
      var = (x.colwise() - mean).array().square().rowwise().mean();
      const T keep = static_cast<T>(momentum_);
      const T unbiased = static_cast<T>(n) / static_cast<T>(n - 1);
      running_mean_.value().col(0) = keep * running_mean_.value().col(0) + (T(1) - keep) * mean;
      running_var_.value().col(0) =
          keep * running_var_.value().col(0) + (T(1) - keep) * unbiased * var;
    } else {
      mean = running_mean_.value().col(0);
      var = running_var_.value().col(0);
    }
    inv_std_ = (var.array() + static_cast<T>(eps_)).rsqrt().matrix();
    xhat_ = (x.colwise() - mean);
    xhat_.array().colwise() *= inv_std_.array();
    Mat<T> y = xhat_;
    y.array().colwise() *= gamma_.value().col(0).array();
    y.colwise() += beta_.value().col(0);
    train_cache_ = mode_ == Mode::kTrain;
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (dy.rows() != xhat_.rows() || dy.cols() != xhat_.cols())
      throw std::invalid_argument("BatchNorm::backward: gradient shape mismatch");
    gamma_.grad().col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad().col(0) += dy.rowwise().sum();
    Mat<T> dxhat = dy;
    dxhat.array().colwise() *= gamma_.value().col(0).array();
    if (!train_cache_) {
      dxhat.array().colwise() *= inv_std_.array();
      return dxhat;
    }
    const T n = static_cast<T>(dy.cols());
    const Vec<T> sum_d = dxhat.rowwise().sum();
    const Vec<T> sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum().matrix();
    Mat<T> dx = n * dxhat;
    dx.colwise() -= sum_d;
    dx.array() -= xhat_.array().colwise() * sum_dx.array();
    dx.array().colwise() *= inv_std_.array() / n;
    return dx;
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  StateRefs<T> state() { return {{&gamma_, &beta_}, {&running_mean_, &running_var_}}; }

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
  double momentum_ = 0.9, eps_ = 1e-5;
  Mode mode_ = Mode::kTrain;
  Mat<T> xhat_;
  Vec<T> inv_std_;
  bool train_cache_ = true;
};

template <typename T>
class ReLU {
 public:
  Mat<T> forward(const Mat<T>& x) {
    mask_ = (x.array() > T(0)).template cast<T>();
    return (x.array() * mask_.array()).matrix();
  }
  Mat<T> backward(const Mat<T>& dy) { return (dy.array() * mask_.array()).matrix(); }

 private:
  Mat<T> mask_;
};

template <typename T>
inline Mat<T> sigmoid(const Mat<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

template <typename T>
class Sigmoid {
 public:
  Mat<T> forward(const Mat<T>& x) {
    y_ = sigmoid(x);
    return y_;
  }
  Mat<T> backward(const Mat<T>& dy) {
    return (dy.array() * y_.array() * (T(1) - y_.array())).matrix();
  }

 private:
  Mat<T> y_;
};

// gate(a, b) = a * sigmoid(b), elementwise.
template <typename T>
class Gate {
 public:
  Mat<T> forward(const Mat<T>& a, const Mat<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw std::invalid_argument("Gate: branch shapes differ");
    a_ = a;
    s_ = sigmoid(b);
    return (a.array() * s_.array()).matrix();
  }
  // Returns {d a, d b}.
  std::pair<Mat<T>, Mat<T>> backward(const Mat<T>& dy) {
    Mat<T> da = (dy.array() * s_.array()).matrix();
    Mat<T> db = (dy.array() * a_.array() * s_.array() * (T(1) - s_.array())).matrix();
    return {std::move(da), std::move(db)};
  }

 private:
  Mat<T> a_, s_;
};

// Inverted dropout. Eval mode is the identity and draws nothing from the RNG.
template <typename T>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p, std::uint64_t seed = 0) : p_(p), rng_(seed) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("Dropout: p must be in [0, 1)");
  }

  double p() const { return p_; }
  void set_mode(Mode m) { mode_ = m; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  Mat<T> forward(const Mat<T>& x) {
    active_ = mode_ == Mode::kTrain && p_ > 0.0;
    if (!active_) return x;
    std::bernoulli_distribution keep(1.0 - p_);
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    mask_.resize(x.rows(), x.cols());
    for (Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = keep(rng_) ? scale : T(0);
    return (x.array() * mask_.array()).matrix();
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (!active_) return dy;
    return (dy.array() * mask_.array()).matrix();
  }

 private:
  double p_ = 0.0;
  std::mt19937_64 rng_;
  Mode mode_ = Mode::kTrain;
  bool active_ = false;
  Mat<T> mask_;
};

}  // namespace mtass
