// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mtass {

using Index = Eigen::Index;

// Activations are channels x frames, column-major, so each frame is one
// contiguous column and a batch of equal-length sequences is laid out
// back to back along the columns.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Mode { kTrain, kEval };

// Parameter or buffer: a shaped array with a same-shaped gradient slot.
// Storage is a matrix of shape[0] rows and prod(shape[1:]) columns.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::string name, std::vector<Index> shape, bool requires_grad = true)
      : name_(std::move(name)), shape_(std::move(shape)), requires_grad_(requires_grad) {
    if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
    for (Index d : shape_)
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    const Index rows = shape_[0];
    const Index cols = std::accumulate(shape_.begin() + 1, shape_.end(), Index{1},
                                       std::multiplies<>());
    value_ = Mat<T>::Zero(rows, cols);
    if (requires_grad_) grad_ = Mat<T>::Zero(rows, cols);
  }

  const std::string& name() const { return name_; }
  const std::vector<Index>& shape() const { return shape_; }
  Index numel() const { return value_.size(); }
  bool requires_grad() const { return requires_grad_; }

  Mat<T>& value() { return value_; }
  const Mat<T>& value() const { return value_; }
  Mat<T>& grad() { return grad_; }
  const Mat<T>& grad() const { return grad_; }

  void zero_grad() {
    if (requires_grad_) grad_.setZero();
  }

 private:
  std::string name_;
  std::vector<Index> shape_;
  bool requires_grad_ = true;
  Mat<T> value_;
  Mat<T> grad_;
};

// Declaration-ordered views of a module's trainable parameters and its
// non-trainable state (batch-norm running statistics).
template <typename T>
struct StateRefs {
  std::vector<Tensor<T>*> params;
  std::vector<Tensor<T>*> buffers;

  void append(const StateRefs& o) {
    params.insert(params.end(), o.params.begin(), o.params.end());
    buffers.insert(buffers.end(), o.buffers.begin(), o.buffers.end());
  }
  Index num_params() const {
    Index n = 0;
    for (auto* p : params) n += p->numel();
    return n;
  }
  void zero_grad() const {
    for (auto* p : params) p->zero_grad();
  }
};

// Kaiming-uniform with negative slope a = sqrt(5):
// bound = sqrt(6 / ((1 + a^2) fan_in)) = 1 / sqrt(fan_in). Bias uses the same bound.
template <typename T>
void kaiming_uniform(Tensor<T>& w, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, fan_in)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < w.value().size(); ++i) w.value().data()[i] = static_cast<T>(u(rng));
}

template <typename T>
void bias_uniform(Tensor<T>& b, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, fan_in)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < b.value().size(); ++i) b.value().data()[i] = static_cast<T>(u(rng));
}

}  // namespace mtass
