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

#include "lgmnet/adam.hpp"
#include "lgmnet/episodes.hpp"
#include "lgmnet/targetnet.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace lgmnet {

struct TrainConfig {
  DatasetKind dataset = DatasetKind::kBlobs;
  int n_way = 5;
  int k_shot = 1;
  int n_query = 15;
  int tasks_per_batch = 16;
  std::int64_t total_batches = 20000;
  std::uint64_t seed = 7;
  ModelConfig model;
};

/// 1e-3 * 0.9^floor(batch / 1500)
float lr_at(std::int64_t batch_index);

/// Everything needed to continue training bit-for-bit: parameters, ITN
/// statistics, Adam moments and the batch counter. Per-batch randomness is
/// derived from (seed, batch index), so no generator state is carried.
struct TrainingState {
  TrainConfig config;
  MetaNet net;
  AdamState adam;
  std::int64_t batch = 0;
};

TrainingState init_training(const TrainConfig& config);

/// Dataset and split implied by a training config.
struct TaskSource {
  SyntheticDataset dataset;
  MetaSplit split;
};
TaskSource make_task_source(const TrainConfig& config);
std::uint64_t split_seed_for(std::uint64_t seed);

struct StepStats {
  std::int64_t batch = 0;
  float lr = 0.0f;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
};

/// Forward pass over a task batch on one tape. Supports of all tasks pass
/// through the encoder together, so in training mode the ITN statistics
/// cover the whole batch.
template <typename Scalar>
struct BatchForward {
  Tensor<Scalar> loss;  // mean of per-task losses
  std::vector<Tensor<Scalar>> task_losses;
  std::vector<Tensor<Scalar>> probabilities;
  std::vector<BatchMoments<Scalar>> moments;
};

template <typename Scalar>
BatchForward<Scalar> batch_forward(Tape<Scalar>& tape, const MetaNet& net, const BoundParameters<Scalar>& params,
                                   std::span<const TaskInstance> tasks, std::span<const Matrix<float>> noises,
                                   ItnMode mode) {
  if (tasks.empty()) throw std::invalid_argument("batch_forward: empty task batch");
  if (noises.size() != tasks.size()) throw std::invalid_argument("batch_forward: one noise draw per task needed");
  const auto& cfg = net.config;

  std::vector<ContextDistribution<Scalar>> contexts;
  contexts.reserve(tasks.size());
  BatchForward<Scalar> out;
  if (cfg.use_encoder) {
    Eigen::Index rows = 0;
    for (const auto& t : tasks) rows += t.support_x.rows();
    Matrix<Scalar> stacked(rows, cfg.input_dim);
    Eigen::Index at = 0;
    for (const auto& t : tasks) {
      stacked.middleRows(at, t.support_x.rows()) = t.support_x.template cast<Scalar>();
      at += t.support_x.rows();
    }
    const auto encoded = encode_rows(net, params, tape.leaf(std::move(stacked)), mode, &out.moments);
    at = 0;
    for (const auto& t : tasks) {
      contexts.push_back(pool_context(slice_rows(encoded, at, t.support_x.rows()), cfg.context_dim));
      at += t.support_x.rows();
    }
  } else {
    for (std::size_t i = 0; i < tasks.size(); ++i) contexts.push_back(prior_context(tape, cfg.context_dim));
  }

  Tensor<Scalar> total;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    const auto c = sample_context(contexts[i], Matrix<Scalar>(noises[i].template cast<Scalar>()),
                                  cfg.deterministic_context);
    const auto weights = generate_weights(net, params, c, cfg.weight_norm);
    const auto support_emb = embed(weights, tape.leaf(Matrix<Scalar>(task.support_x.template cast<Scalar>())));
    const auto query_emb = embed(weights, tape.leaf(Matrix<Scalar>(task.query_x.template cast<Scalar>())));
    const auto kernel = attention_kernel(query_emb, support_emb);
    const auto probs = match_probabilities(kernel, tape.leaf(one_hot<Scalar>(task.support_y, task.n_way)));
    const auto loss = episode_loss(probs, task.query_y);
    out.task_losses.push_back(loss);
    out.probabilities.push_back(probs);
    total = i == 0 ? loss : total + loss;
  }
  out.loss = total * (Scalar(1) / static_cast<Scalar>(tasks.size()));
  return out;
}

/// One meta-update: forward the batch in training mode, backpropagate the
/// mean task loss, take an Adam step on the MetaNet parameters at
/// lr_at(state.batch) and fold the ITN batch statistics into the running
/// averages. Throws NonFiniteError naming the batch and task when a loss is
/// not finite; the state is left untouched in that case.
StepStats train_step(TrainingState& state, std::span<const TaskInstance> tasks,
                     std::span<const Matrix<float>> noises);

/// Tasks and context noise for batch `batch_index`, derived from the
/// config seed so any batch can be regenerated independently.
struct BatchDraw {
  std::vector<TaskInstance> tasks;
  std::vector<Matrix<float>> noises;
};
BatchDraw draw_batch(const TrainConfig& config, const TaskSource& source, std::int64_t batch_index);

/// Runs batches until state.batch reaches `until_batch`. `on_step` (may be
/// empty) sees each batch's stats.
void train(TrainingState& state, const TaskSource& source, std::int64_t until_batch,
           const std::function<void(const StepStats&)>& on_step = {});

/// Training log CSV: header `batch,lr,mean_loss,mean_train_acc`.
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepStats& stats);

}  // namespace lgmnet
