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

#include "lgmnet/training.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace lgmnet {
namespace {

constexpr double kInitialLr = 1e-3;
constexpr double kLrDecay = 0.9;
constexpr std::int64_t kLrDecayEvery = 1500;

// Stream keys, so the same seed never feeds two consumers.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kSplitSalt = 0x5eed5eedULL;

}  // namespace

float lr_at(std::int64_t batch_index) {
  if (batch_index < 0) throw std::invalid_argument("lr_at: negative batch index");
  return static_cast<float>(kInitialLr * std::pow(kLrDecay, static_cast<double>(batch_index / kLrDecayEvery)));
}

std::uint64_t split_seed_for(std::uint64_t seed) { return seed ^ kSplitSalt; }

TrainingState init_training(const TrainConfig& config) {
  if (config.tasks_per_batch <= 0) throw std::invalid_argument("tasks_per_batch must be positive");
  TrainingState state;
  state.config = config;
  auto init_rng = derive_rng({config.seed, kInitStream});
  state.net = init_metanet(config.model, init_rng());
  state.adam = AdamState::zeros_like(state.net.params);
  return state;
}

TaskSource make_task_source(const TrainConfig& config) {
  TaskSource src{generate_dataset(config.dataset, config.seed), {}};
  src.split = split_meta(src.dataset, split_seed_for(config.seed));
  return src;
}

BatchDraw draw_batch(const TrainConfig& config, const TaskSource& source, std::int64_t batch_index) {
  Rng rng = derive_rng({config.seed, kBatchStream, static_cast<std::uint64_t>(batch_index)});
  BatchDraw draw;
  for (int i = 0; i < config.tasks_per_batch; ++i) {
    draw.tasks.push_back(
        sample_task(source.dataset, source.split.train_classes, config.n_way, config.k_shot, config.n_query, rng));
    draw.noises.push_back(draw_context_noise(config.model.context_dim, rng));
  }
  return draw;
}

StepStats train_step(TrainingState& state, std::span<const TaskInstance> tasks,
                     std::span<const Matrix<float>> noises) {
  for (const auto& t : tasks) {
    if (t.n_way != tasks.front().n_way || t.k_shot != tasks.front().k_shot) {
      throw std::invalid_argument("train_step: tasks in a batch must share N and K");
    }
  }
  Tape<float> tape;
  const BoundParameters<float> params(tape, state.net.params);
  auto fwd = batch_forward(tape, state.net, params, tasks, noises, ItnMode::kTraining);

  StepStats stats;
  stats.batch = state.batch;
  stats.lr = lr_at(state.batch);
  double acc = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const float l = fwd.task_losses[i].item();
    if (!std::isfinite(l)) {
      throw NonFiniteError("non-finite loss at batch " + std::to_string(state.batch) + ", task " +
                           std::to_string(i) + " (seed " + std::to_string(state.config.seed) + ")");
    }
    acc += accuracy(argmax_rows(fwd.probabilities[i].value()), tasks[i].query_y);
  }
  stats.mean_loss = fwd.loss.item();
  stats.mean_accuracy = acc / static_cast<double>(tasks.size());

  tape.backward(fwd.loss);
  params.export_grads(state.net.params);
  adam_step(state.net.params, state.adam, stats.lr);
  for (std::size_t i = 0; i < fwd.moments.size(); ++i) state.net.itn.at(i).update(fwd.moments[i]);
  ++state.batch;
  return stats;
}

void train(TrainingState& state, const TaskSource& source, std::int64_t until_batch,
           const std::function<void(const StepStats&)>& on_step) {
  while (state.batch < until_batch) {
    const auto draw = draw_batch(state.config, source, state.batch);
    const auto stats = train_step(state, draw.tasks, draw.noises);
    if (on_step) on_step(stats);
  }
}

void write_log_header(std::ostream& out) { out << "batch,lr,mean_loss,mean_train_acc\n"; }

void write_log_row(std::ostream& out, const StepStats& stats) {
  char buf[32];
  auto put = [&](auto v) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
  };
  put(stats.batch);
  out << ',';
  put(stats.lr);
  out << ',';
  put(stats.mean_loss);
  out << ',';
  put(stats.mean_accuracy);
  out << '\n';
}

}  // namespace lgmnet
