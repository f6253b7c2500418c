// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mtass/tensor.hpp"

namespace mtass {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created lazily on the first
// step and are matched to parameters by position.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::int64_t step_count() const { return t_; }
  const std::vector<Mat<T>>& first_moments() const { return m_; }
  const std::vector<Mat<T>>& second_moments() const { return v_; }

  // Leaves every parameter and the step counter untouched if any gradient
  // is non-finite.
  void step(const std::vector<Tensor<T>*>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Mat<T>::Zero(p->value().rows(), p->value().cols()));
        v_.push_back(Mat<T>::Zero(p->value().rows(), p->value().cols()));
      }
    }
    if (m_.size() != params.size())
      throw std::invalid_argument("Adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->grad().rows() != m_[i].rows() || params[i]->grad().cols() != m_[i].cols())
        throw std::invalid_argument("Adam: parameter shape changed between steps");
      if (!params[i]->grad().allFinite())
        throw NonFiniteGradient("Adam: non-finite gradient in " + params[i]->name());
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(opts_.lr / c1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(opts_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = params[i]->grad().array();
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      params[i]->value().array() -=
          step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_c2 + eps);
    }
  }

 private:
  AdamOptions opts_;
  std::int64_t t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

}  // namespace mtass
