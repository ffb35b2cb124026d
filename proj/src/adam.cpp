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

#include "lgmnet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lgmnet {

AdamState AdamState::zeros_like(const ParameterStore& store) {
  AdamState state;
  for (const auto& p : store.all()) {
    state.first_moment.push_back(Matrix<float>::Zero(p.value.rows(), p.value.cols()));
    state.second_moment.push_back(Matrix<float>::Zero(p.value.rows(), p.value.cols()));
  }
  return state;
}

void adam_step(ParameterStore& store, AdamState& state, float lr, const AdamHyperParams& hp) {
  auto& params = store.all();
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::logic_error("adam_step: optimizer state does not match parameter count");
  }
  for (const auto& p : params) {
    if (!p.grad) throw std::logic_error("adam_step: parameter '" + p.name + "' has no gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(hp.beta1), t));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(hp.beta2), t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = *p.grad;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = hp.beta1 * m + (1.0f - hp.beta1) * g;
    v = hp.beta2 * v + (1.0f - hp.beta2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / c1;
    const auto v_hat = v.array() / c2;
    p.value.array() -= lr * m_hat / (v_hat.sqrt() + hp.eps);
  }
  store.clear_grads();
}

}  // namespace lgmnet
