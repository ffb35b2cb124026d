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

// Intertask normalization: batch normalization whose training-mode
// statistics are taken over the support samples of every task in a meta
// batch at once. Inference uses the accumulated running statistics, so a
// task's output never depends on which other tasks are evaluated with it.

#include "lgmnet/autodiff.hpp"

namespace lgmnet {

enum class ItnMode { kTraining, kInference };

inline constexpr float kItnEps = 1e-5f;

struct ItnLayer {
  Eigen::RowVectorXf running_mean;
  Eigen::RowVectorXf running_var;
  float momentum = 0.99f;

  explicit ItnLayer(Eigen::Index width = 0, float momentum_ = 0.99f)
      : running_mean(Eigen::RowVectorXf::Zero(width)),
        running_var(Eigen::RowVectorXf::Ones(width)),
        momentum(momentum_) {}

  Eigen::Index width() const { return running_mean.size(); }

  /// running <- momentum * running + (1 - momentum) * batch
  template <typename Scalar>
  void update(const BatchMoments<Scalar>& batch) {
    running_mean = momentum * running_mean + (1.0f - momentum) * batch.mean.template cast<float>();
    running_var = momentum * running_var + (1.0f - momentum) * batch.variance.template cast<float>();
  }
};

/// Normalizes `features` (rows = samples) with learned `scale`/`shift`.
/// Training mode uses the statistics of these rows and reports them through
/// `moments` (the caller folds them into the running averages); inference
/// mode uses the layer's running statistics.
template <typename Scalar>
Tensor<Scalar> itn_forward(const ItnLayer& layer, const Tensor<Scalar>& features, const Tensor<Scalar>& scale,
                           const Tensor<Scalar>& shift, ItnMode mode, BatchMoments<Scalar>* moments = nullptr) {
  if (features.cols() != layer.width()) {
    throw DimensionError("itn_forward: feature width " + std::to_string(features.cols()) + " vs layer width " +
                         std::to_string(layer.width()));
  }
  if (mode == ItnMode::kTraining) {
    return batch_norm_train(features, scale, shift, static_cast<Scalar>(kItnEps), moments);
  }
  return batch_norm_inference<Scalar>(features, scale, shift, layer.running_mean.template cast<Scalar>(),
                                      layer.running_var.template cast<Scalar>(), static_cast<Scalar>(kItnEps));
}

}  // namespace lgmnet
