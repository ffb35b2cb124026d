// Copyright 2026 The lgmnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Central finite-difference checks of reverse-mode gradients. The analytic
// gradient comes from a 32-bit tape; the differences use the five-point
// central stencil on a 64-bit tape at the same (float-representable) point.

#include "lgmnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace lgmnet {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  double denominator_floor = 1e-2;  // error = |a - n| / max(|a|, |n|, floor)
};

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil flips a relu
  double tolerance = 1e-4;
  // Worst coordinate: input index, flat element index, both gradients.
  std::size_t worst_input = 0;
  Eigen::Index worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed() const { return checked > 0 && max_error <= tolerance; }
};

namespace detail {

template <typename Scalar>
std::vector<bool> relu_pattern(const Tape<Scalar>& tape) {
  std::vector<bool> mask;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto& n = tape.node(i);
    if (std::strcmp(n.op, "relu") != 0) continue;
    for (Eigen::Index j = 0; j < n.value.size(); ++j) mask.push_back(n.value.data()[j] > Scalar(0));
  }
  return mask;
}

template <typename Scalar, typename Build>
Tensor<Scalar> build_on(Tape<Scalar>& tape, const std::vector<Matrix<Scalar>>& inputs, Build& build) {
  std::vector<Tensor<Scalar>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
  return build(tape, leaves);
}

}  // namespace detail

/// `build(tape, leaves)` must return a scalar loss and be callable for both
/// Tape<float> and Tape<double>.
template <typename Build>
GradCheckResult gradient_check(std::string name, const std::vector<Matrix<float>>& inputs, Build build,
                               const GradCheckOptions& options = {}) {
  GradCheckResult result;
  result.name = std::move(name);
  result.tolerance = options.tolerance;

  Tape<float> tape_f;
  std::vector<Tensor<float>> leaves_f;
  for (const auto& m : inputs) leaves_f.push_back(tape_f.leaf(m, true));
  const auto loss_f = build(tape_f, leaves_f);
  tape_f.backward(loss_f);

  std::vector<Matrix<double>> point;
  for (const auto& m : inputs) point.push_back(m.cast<double>());
  std::vector<bool> base_pattern;
  {
    Tape<double> tape;
    detail::build_on(tape, point, build);
    base_pattern = detail::relu_pattern(tape);
  }

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto grad = leaves_f[k].grad();
    for (Eigen::Index j = 0; j < inputs[k].size(); ++j) {
      const double original = point[k].data()[j];
      static constexpr int kOffsets[4] = {2, 1, -1, -2};
      double f[4];
      bool kink = false;
      for (int i = 0; i < 4; ++i) {
        point[k].data()[j] = original + kOffsets[i] * options.step;
        Tape<double> tape;
        f[i] = detail::build_on(tape, point, build).item();
        kink = kink || detail::relu_pattern(tape) != base_pattern;
      }
      point[k].data()[j] = original;
      if (kink) {
        ++result.skipped;
        continue;
      }
      const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * options.step);
      const double analytic = grad ? static_cast<double>(grad->data()[j]) : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
      const double error = std::abs(analytic - numeric) / denom;
      if (error >= result.max_error) {
        result.max_error = error;
        result.worst_input = k;
        result.worst_element = j;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
  }
  return result;
}

/// Every differentiable operation plus the composed encode, sample, generate,
/// embed, attend, loss pipeline on a miniature model, with inputs drawn from
/// `seed`.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace lgmnet
