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

// Matching-network classifier with externally supplied weights. Support and
// query points share one embedding MLP; each query attends over all support
// embeddings with softmax(cosine similarity) and its class distribution is
// the attention-weighted sum of support one-hot labels.

#include "lgmnet/metanet.hpp"

#include <vector>

namespace lgmnet {

inline constexpr float kProbabilityFloor = 1e-9f;

/// Feed-forward through the generated layers: relu between layers, none
/// after the last.
template <typename Scalar>
Tensor<Scalar> embed(const GeneratedWeights<Scalar>& weights, const Tensor<Scalar>& inputs) {
  if (weights.layers.empty()) throw DimensionError("embed: no layers");
  Tensor<Scalar> h = inputs;
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    h = linear(h, weights.layers[l].weight, weights.layers[l].bias);
    if (l + 1 < weights.layers.size()) h = relu(h);
  }
  return h;
}

/// Row r, column s: exp(cos(q_r, s_s)) / sum_s' exp(cos(q_r, s_s')).
template <typename Scalar>
Tensor<Scalar> attention_kernel(const Tensor<Scalar>& query_emb, const Tensor<Scalar>& support_emb) {
  if (support_emb.rows() == 0) throw DimensionError("attention_kernel: empty support");
  if (query_emb.cols() != support_emb.cols()) {
    throw DimensionError("attention_kernel: embedding widths " + shape_string(query_emb.shape()) + " vs " +
                         shape_string(support_emb.shape()));
  }
  const auto cosine = matmul(l2_normalize_rows(query_emb), transpose(l2_normalize_rows(support_emb)));
  return softmax_rows(cosine);
}

template <typename Scalar>
Matrix<Scalar> one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw DimensionError("one_hot: label out of range");
    m(static_cast<Eigen::Index>(i), labels[i]) = Scalar(1);
  }
  return m;
}

/// kernel [q x NK] times support one-hot [NK x N].
template <typename Scalar>
Tensor<Scalar> match_probabilities(const Tensor<Scalar>& kernel, const Tensor<Scalar>& support_onehot) {
  if (kernel.cols() != support_onehot.rows()) {
    throw DimensionError("match_probabilities: kernel " + shape_string(kernel.shape()) + " vs labels " +
                         shape_string(support_onehot.shape()));
  }
  return matmul(kernel, support_onehot);
}

/// Mean cross-entropy of the matching probabilities, floored at 1e-9.
template <typename Scalar>
Tensor<Scalar> episode_loss(const Tensor<Scalar>& probabilities, const std::vector<int>& query_labels) {
  return probability_nll(probabilities, query_labels, static_cast<Scalar>(kProbabilityFloor));
}

/// Argmax per row, ties to the lowest index.
template <typename Derived>
std::vector<int> argmax_rows(const Eigen::MatrixBase<Derived>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

struct AttentionResult {
  Matrix<float> kernel;         // q x NK
  Matrix<float> probabilities;  // q x N
  std::vector<int> predictions;
};

/// Full classification of `query` given support points and labels, with
/// plain-value weights.
AttentionResult classify(const WeightValues& weights, const Matrix<float>& support_x,
                         const std::vector<int>& support_y, int n_way, const Matrix<float>& query_x);

/// Embeddings only, for plain-value weights.
Matrix<float> embed_values(const WeightValues& weights, const Matrix<float>& inputs);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

}  // namespace lgmnet
