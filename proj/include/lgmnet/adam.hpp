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

#include "lgmnet/parameters.hpp"

#include <cstdint>
#include <vector>

namespace lgmnet {

struct AdamHyperParams {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First and second moment estimates, one pair per parameter in store order.
struct AdamState {
  std::vector<Matrix<float>> first_moment;
  std::vector<Matrix<float>> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParameterStore& store);
};

/// One bias-corrected Adam update over every parameter in `store`, then
/// clears the gradients. Throws std::logic_error if any gradient is missing.
void adam_step(ParameterStore& store, AdamState& state, float lr, const AdamHyperParams& hp = {});

}  // namespace lgmnet
