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

#include "lgmnet/targetnet.hpp"

namespace lgmnet {
namespace {

GeneratedWeights<float> bind_weights(Tape<float>& tape, const WeightValues& values) {
  GeneratedWeights<float> g;
  g.normalized = values.normalized;
  for (std::size_t l = 0; l < values.weights.size(); ++l) {
    Matrix<float> bias = values.biases[l];
    g.layers.push_back({tape.leaf(values.weights[l]), tape.leaf(std::move(bias))});
  }
  return g;
}

}  // namespace

Matrix<float> embed_values(const WeightValues& weights, const Matrix<float>& inputs) {
  Tape<float> tape;
  return embed(bind_weights(tape, weights), tape.leaf(inputs)).value();
}

AttentionResult classify(const WeightValues& weights, const Matrix<float>& support_x,
                         const std::vector<int>& support_y, int n_way, const Matrix<float>& query_x) {
  Tape<float> tape;
  const auto g = bind_weights(tape, weights);
  const auto support_emb = embed(g, tape.leaf(support_x));
  const auto query_emb = embed(g, tape.leaf(query_x));
  const auto kernel = attention_kernel(query_emb, support_emb);
  const auto probs = match_probabilities(kernel, tape.leaf(one_hot<float>(support_y, n_way)));
  return {kernel.value(), probs.value(), argmax_rows(probs.value())};
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions.at(i) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace lgmnet
