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

#include "lgmnet/random.hpp"
#include "lgmnet/synthetic.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace lgmnet {

class SamplingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Disjoint meta-train / meta-test partition of class ids.
struct MetaSplit {
  std::vector<int> train_classes;  // 80
  std::vector<int> test_classes;   // 20
};

enum class SplitSide { kTrain, kTest };

inline constexpr int kMetaTrainClasses = 80;

MetaSplit split_meta(const SyntheticDataset& dataset, std::uint64_t seed);

inline const std::vector<int>& classes_on(const MetaSplit& split, SplitSide side) {
  return side == SplitSide::kTrain ? split.train_classes : split.test_classes;
}

/// One N-way K-shot episode. As sampled, support rows are grouped by label
/// (K rows of label 0, then K of label 1, ...); query rows likewise.
struct TaskInstance {
  int n_way = 0;
  int k_shot = 0;
  Matrix<float> support_x;
  std::vector<int> support_y;
  Matrix<float> query_x;
  std::vector<int> query_y;
  std::vector<int> class_ids;  // dataset class id of each label
  // Sample index inside the source class, for disjointness checks.
  std::vector<int> support_sample;
  std::vector<int> query_sample;

  int n_query_per_class() const { return n_way == 0 ? 0 : static_cast<int>(query_y.size()) / n_way; }
};

/// Draws `n_way` distinct classes from `side_classes` and, per class,
/// `k_shot` support plus `n_query` query samples without replacement.
/// Labels follow draw order. Throws SamplingError when the side or class
/// cannot supply enough.
TaskInstance sample_task(const SyntheticDataset& dataset, std::span<const int> side_classes, int n_way, int k_shot,
                         int n_query, Rng& rng);

/// Reorders support rows: row i of the result is row permutation[i] of the
/// input. Throws SamplingError unless `permutation` is a bijection.
TaskInstance permute_support(const TaskInstance& task, std::span<const std::size_t> permutation);

}  // namespace lgmnet
