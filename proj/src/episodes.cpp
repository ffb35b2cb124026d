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

#include "lgmnet/episodes.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace lgmnet {

MetaSplit split_meta(const SyntheticDataset& dataset, std::uint64_t seed) {
  if (static_cast<int>(dataset.classes.size()) != kNumClasses) {
    throw SamplingError("split_meta: expected " + std::to_string(kNumClasses) + " classes, dataset has " +
                        std::to_string(dataset.classes.size()));
  }
  std::vector<int> ids(dataset.classes.size());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  MetaSplit split;
  split.train_classes.assign(ids.begin(), ids.begin() + kMetaTrainClasses);
  split.test_classes.assign(ids.begin() + kMetaTrainClasses, ids.end());
  std::sort(split.train_classes.begin(), split.train_classes.end());
  std::sort(split.test_classes.begin(), split.test_classes.end());
  return split;
}

TaskInstance sample_task(const SyntheticDataset& dataset, std::span<const int> side_classes, int n_way, int k_shot,
                         int n_query, Rng& rng) {
  if (n_way <= 0 || k_shot <= 0 || n_query < 0) throw SamplingError("sample_task: n_way and k_shot must be positive");
  if (n_way > static_cast<int>(side_classes.size())) {
    throw SamplingError("sample_task: " + std::to_string(n_way) + "-way task needs more than the " +
                        std::to_string(side_classes.size()) + " available classes");
  }

  std::vector<int> pool(side_classes.begin(), side_classes.end());
  std::shuffle(pool.begin(), pool.end(), rng);

  TaskInstance task;
  task.n_way = n_way;
  task.k_shot = k_shot;
  task.class_ids.assign(pool.begin(), pool.begin() + n_way);
  task.support_x.resize(n_way * k_shot, 2);
  task.query_x.resize(n_way * n_query, 2);

  for (int label = 0; label < n_way; ++label) {
    const auto& cls = dataset.classes.at(static_cast<std::size_t>(task.class_ids[label]));
    const auto available = static_cast<int>(cls.points.rows());
    if (k_shot + n_query > available) {
      throw SamplingError("sample_task: class " + std::to_string(cls.class_id) + " has " + std::to_string(available) +
                          " samples, need " + std::to_string(k_shot + n_query));
    }
    std::vector<int> order(available);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < k_shot; ++k) {
      task.support_x.row(label * k_shot + k) = cls.points.row(order[k]);
      task.support_y.push_back(label);
      task.support_sample.push_back(order[k]);
    }
    for (int q = 0; q < n_query; ++q) {
      task.query_x.row(label * n_query + q) = cls.points.row(order[k_shot + q]);
      task.query_y.push_back(label);
      task.query_sample.push_back(order[k_shot + q]);
    }
  }
  return task;
}

TaskInstance permute_support(const TaskInstance& task, std::span<const std::size_t> permutation) {
  const std::size_t n = task.support_y.size();
  if (permutation.size() != n) throw SamplingError("permute_support: permutation length mismatch");
  std::vector<bool> seen(n, false);
  for (auto p : permutation) {
    if (p >= n || seen[p]) throw SamplingError("permute_support: not a permutation");
    seen[p] = true;
  }
  TaskInstance out = task;
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = permutation[i];
    out.support_x.row(static_cast<Eigen::Index>(i)) = task.support_x.row(static_cast<Eigen::Index>(src));
    out.support_y[i] = task.support_y[src];
    out.support_sample[i] = task.support_sample[src];
  }
  return out;
}

}  // namespace lgmnet
