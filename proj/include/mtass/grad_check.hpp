// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mtass/tensor.hpp"

namespace mtass {

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  // Elements checked per tensor; 0 checks all of them.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
  // An element whose relative error exceeds retry_above is measured again
  // with step / retry_factor and keeps the smaller error. A perturbation
  // that straddles a ReLU kink gives a step-dependent difference quotient;
  // a wrong analytic gradient does not improve with a smaller step.
  double retry_above = 1e-5;
  double retry_factor = 10.0;  // <= 1 disables the retry
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]" of the worst element
  std::size_t checked = 0;
  std::size_t retried = 0;

  bool passed(double tol) const { return checked > 0 && max_rel_error < tol; }
};

// Compares analytic gradients against central finite differences.
// `loss` must be a deterministic function of the tensors' values.
// `analytic` must leave d(loss)/d(tensor) in each tensor's grad().
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::function<void()>& analytic,
                                  const std::vector<Tensor<double>*>& tensors,
                                  const GradCheckOptions& opts = {}) {
  for (auto* t : tensors) t->zero_grad();
  analytic();
  std::vector<Mat<double>> grads;
  for (auto* t : tensors) grads.push_back(t->grad());

  GradCheckReport rep;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Tensor<double>& t = *tensors[ti];
    std::vector<Index> idx(static_cast<std::size_t>(t.numel()));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (opts.max_per_tensor > 0 && idx.size() > opts.max_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_per_tensor);
    }
    for (Index i : idx) {
      double& v = t.value().data()[i];
      const double a = grads[ti].data()[i];
      auto rel_error = [&](double h) {
        const double saved = v;
        v = saved + h;
        const double up = loss();
        v = saved - h;
        const double down = loss();
        v = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
        return std::abs(a - numeric) / denom;
      };
      double rel = rel_error(opts.step);
      if (rel > opts.retry_above && opts.retry_factor > 1.0) {
        rel = std::min(rel, rel_error(opts.step / opts.retry_factor));
        ++rep.retried;
      }
      ++rep.checked;
      if (rel > rep.max_rel_error || !std::isfinite(rel)) {
        rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        rep.worst = t.name() + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace mtass
