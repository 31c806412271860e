/* Copyright 2026 The MLN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#ifndef MLN_ADAM_HPP_
#define MLN_ADAM_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mln/error.hpp"
#include "mln/matrix.hpp"

namespace mln {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

using ParamRefs = std::vector<std::reference_wrapper<Matrix>>;

// One bias-corrected Adam step over every parameter in params. Moment
// accumulators are created on first use with the parameters' shapes.
inline void adam_update(AdamState& state, const ParamRefs& params,
                        const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_update: " + std::to_string(grads.size()) +
                         " gradients for " + std::to_string(params.size()) +
                         " parameters");
  }
  if (state.first_moment.empty()) {
    for (const Matrix& p : params) {
      state.first_moment.emplace_back(p.rows(), p.cols());
      state.second_moment.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.first_moment.size() != params.size())
    throw DimensionError("adam_update: state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = params[i];
    if (!p.same_shape(grads[i]) || !p.same_shape(state.first_moment[i]))
      throw DimensionError("adam_update: shape mismatch for parameter " +
                           std::to_string(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// Step decay: base * factor^floor(step / interval).
inline double lr_schedule(std::uint64_t step, double base, double factor,
                          std::uint64_t interval) {
  if (interval == 0) return base;
  return base * std::pow(factor, static_cast<double>(step / interval));
}

}  // namespace mln

#endif  // MLN_ADAM_HPP_
