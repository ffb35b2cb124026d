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

#include "lgmnet/metanet.hpp"

#include <cmath>

namespace lgmnet {
namespace {

constexpr float kGeneratorInitGain = 0.3f;

Matrix<float> uniform_matrix(Eigen::Index rows, Eigen::Index cols, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

MetaNet init_metanet(const ModelConfig& config, std::uint64_t seed) {
  if (config.context_dim <= 0 || config.input_dim <= 0 || config.target_widths.empty()) {
    throw std::invalid_argument("init_metanet: invalid model configuration");
  }
  Rng rng(seed);
  MetaNet net;
  net.config = config;

  if (config.use_encoder) {
    int in = config.input_dim;
    for (std::size_t i = 0; i < config.encoder_hidden.size(); ++i) {
      const int out = config.encoder_hidden[i];
      net.params.add(encoder_weight_name(i), uniform_matrix(out, in, std::sqrt(6.0f / in), rng));
      net.params.add(encoder_bias_name(i), Matrix<float>::Zero(1, out));
      in = out;
    }
    const std::size_t last = config.encoder_hidden.size();
    net.params.add(encoder_weight_name(last), uniform_matrix(2 * config.context_dim, in, std::sqrt(3.0f / in), rng));
    net.params.add(encoder_bias_name(last), Matrix<float>::Zero(1, 2 * config.context_dim));

    if (config.use_itn) {
      for (std::size_t i = 0; i < config.encoder_hidden.size(); ++i) {
        const int width = config.encoder_hidden[i];
        net.params.add(itn_scale_name(i), Matrix<float>::Ones(1, width));
        net.params.add(itn_shift_name(i), Matrix<float>::Zero(1, width));
        net.itn.emplace_back(width, config.itn_momentum);
      }
    }
  }

  const auto shapes = config.target_layer_shapes();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto [fan_out, fan_in] = shapes[l];
    const int outputs = fan_out * fan_in + fan_out;
    net.params.add(generator_weight_name(l),
                   uniform_matrix(outputs, config.context_dim, kGeneratorInitGain / std::sqrt(float(config.context_dim)), rng));
    net.params.add(generator_bias_name(l), Matrix<float>::Zero(1, outputs));
  }
  return net;
}

Matrix<float> draw_context_noise(int context_dim, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix<float> noise(1, context_dim);
  for (int i = 0; i < context_dim; ++i) noise(0, i) = normal(rng);
  return noise;
}

Eigen::RowVectorXf WeightValues::flatten() const {
  Eigen::Index total = 0;
  for (const auto& w : weights) total += w.size();
  for (const auto& b : biases) total += b.size();
  Eigen::RowVectorXf flat(total);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(at, weights[l].size()) = Eigen::Map<const Eigen::RowVectorXf>(weights[l].data(), weights[l].size());
    at += weights[l].size();
    flat.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return flat;
}

TaskContext infer_context(const MetaNet& net, const Matrix<float>& support_inputs, Rng& rng, bool deterministic) {
  Tape<float> tape;
  const BoundParameters<float> params(tape, net.params);
  const auto dist = net.config.use_encoder
                        ? encode_task(net, params, tape.leaf(support_inputs), ItnMode::kInference)
                        : prior_context(tape, net.config.context_dim);
  const Matrix<float> noise = draw_context_noise(net.config.context_dim, rng);
  const auto c = sample_context(dist, noise, deterministic);
  TaskContext ctx;
  ctx.mu = dist.mu.value().row(0);
  ctx.sigma = dist.sigma.value().row(0);
  ctx.c = c.value().row(0);
  ctx.noise = deterministic ? Eigen::RowVectorXf::Zero(net.config.context_dim) : Eigen::RowVectorXf(noise.row(0));
  return ctx;
}

WeightValues generate_weight_values(const MetaNet& net, const Eigen::RowVectorXf& context, bool apply_wn) {
  Tape<float> tape;
  const BoundParameters<float> params(tape, net.params);
  Matrix<float> c = context;
  return to_values(generate_weights(net, params, tape.leaf(std::move(c)), apply_wn));
}

WeightValues random_prior_weights(const MetaNet& net, Rng& rng, bool apply_wn) {
  const Matrix<float> noise = draw_context_noise(net.config.context_dim, rng);
  return generate_weight_values(net, noise.row(0), apply_wn);
}

}  // namespace lgmnet
