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

// The weight-generating half of the model: a task context encoder that
// pools per-sample encodings of a support set into a diagonal Gaussian over
// a latent task context, and one affine generator per TargetNet layer that
// maps a sampled context to that layer's weights and bias.

#include "lgmnet/itn.hpp"
#include "lgmnet/parameters.hpp"
#include "lgmnet/random.hpp"

#include <stdexcept>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lgmnet {

struct ModelConfig {
  int input_dim = 2;
  int context_dim = 16;
  std::vector<int> encoder_hidden = {8, 8};
  std::vector<int> target_widths = {16, 12, 8};
  bool use_encoder = true;   // false: contexts come from N(0, I) (no task context encoder)
  bool weight_norm = true;
  bool use_itn = true;
  bool deterministic_context = false;  // c = mu
  float itn_momentum = 0.99f;

  /// (fan_out, fan_in) of every TargetNet layer.
  std::vector<std::pair<int, int>> target_layer_shapes() const {
    std::vector<std::pair<int, int>> shapes;
    int in = input_dim;
    for (int w : target_widths) {
      shapes.emplace_back(w, in);
      in = w;
    }
    return shapes;
  }
};

inline std::string encoder_weight_name(std::size_t i) { return "encoder" + std::to_string(i) + "/weight"; }
inline std::string encoder_bias_name(std::size_t i) { return "encoder" + std::to_string(i) + "/bias"; }
inline std::string itn_scale_name(std::size_t i) { return "itn" + std::to_string(i) + "/scale"; }
inline std::string itn_shift_name(std::size_t i) { return "itn" + std::to_string(i) + "/shift"; }
inline std::string generator_weight_name(std::size_t l) { return "generator" + std::to_string(l) + "/weight"; }
inline std::string generator_bias_name(std::size_t l) { return "generator" + std::to_string(l) + "/bias"; }

/// Learnable state plus normalization statistics.
struct MetaNet {
  ModelConfig config;
  ParameterStore params;
  std::vector<ItnLayer> itn;  // one per encoder hidden layer when enabled
};

/// Fresh parameters: fan-in-scaled uniform weights (generator weights
/// shrunk by a further 0.3), zero biases, unit ITN
/// scale and zero shift.
MetaNet init_metanet(const ModelConfig& config, std::uint64_t seed);

/// Mean and spread of the task context distribution, as tape tensors.
template <typename Scalar>
struct ContextDistribution {
  Tensor<Scalar> mu;     // [1 x d_c]
  Tensor<Scalar> sigma;  // [1 x d_c], > 0
};

/// Per-layer generated TargetNet parameters, as tape tensors.
template <typename Scalar>
struct GeneratedLayer {
  Tensor<Scalar> weight;  // [fan_out x fan_in]
  Tensor<Scalar> bias;    // [1 x fan_out]
};

template <typename Scalar>
struct GeneratedWeights {
  std::vector<GeneratedLayer<Scalar>> layers;
  bool normalized = false;
};

/// Runs the encoder MLP on every row of `inputs`, giving [rows x 2 d_c].
/// With ITN enabled each hidden layer is linear -> ITN -> relu, otherwise
/// linear -> relu. In training mode the ITN batch moments are appended to
/// `moments` (one entry per hidden layer).
template <typename Scalar>
Tensor<Scalar> encode_rows(const MetaNet& net, const BoundParameters<Scalar>& params, const Tensor<Scalar>& inputs,
                           ItnMode mode, std::vector<BatchMoments<Scalar>>* moments = nullptr) {
  const auto& cfg = net.config;
  if (inputs.cols() != cfg.input_dim) {
    throw DimensionError("encoder expects " + std::to_string(cfg.input_dim) + " input features, got " +
                         shape_string(inputs.shape()));
  }
  Tensor<Scalar> h = inputs;
  const std::size_t hidden = cfg.encoder_hidden.size();
  for (std::size_t i = 0; i < hidden; ++i) {
    h = linear(h, params[encoder_weight_name(i)], params[encoder_bias_name(i)]);
    if (cfg.use_itn) {
      BatchMoments<Scalar> m;
      h = itn_forward(net.itn.at(i), h, params[itn_scale_name(i)], params[itn_shift_name(i)], mode,
                      moments ? &m : nullptr);
      if (moments && mode == ItnMode::kTraining) moments->push_back(std::move(m));
    }
    h = relu(h);
  }
  return linear(h, params[encoder_weight_name(hidden)], params[encoder_bias_name(hidden)]);
}

/// Mean-pools encoded rows: mu is the first half, sigma = softplus(second
/// half). Pooling is a mean so the result does not depend on row order.
template <typename Scalar>
ContextDistribution<Scalar> pool_context(const Tensor<Scalar>& encoded, int context_dim) {
  if (encoded.cols() != 2 * context_dim) {
    throw DimensionError("pool_context: encoder width " + std::to_string(encoded.cols()) + " is not 2 x " +
                         std::to_string(context_dim));
  }
  if (encoded.rows() < 1) throw DimensionError("pool_context: empty support set");
  const auto pooled = reshape(reduce_mean(encoded, 0), Shape{1, static_cast<std::size_t>(2 * context_dim)});
  return {slice_cols(pooled, 0, context_dim), softplus(slice_cols(pooled, context_dim, context_dim))};
}

/// Encoder then pooling for one task's support inputs.
template <typename Scalar>
ContextDistribution<Scalar> encode_task(const MetaNet& net, const BoundParameters<Scalar>& params,
                                        const Tensor<Scalar>& support_inputs, ItnMode mode) {
  if (support_inputs.shape().size() != 2 || support_inputs.rows() == 0) {
    throw DimensionError("encode_task: empty support set");
  }
  return pool_context(encode_rows(net, params, support_inputs, mode), net.config.context_dim);
}

/// Fixed N(0, I) context distribution used when there is no encoder.
template <typename Scalar>
ContextDistribution<Scalar> prior_context(Tape<Scalar>& tape, int context_dim) {
  return {tape.leaf(Matrix<Scalar>::Zero(1, context_dim)), tape.leaf(Matrix<Scalar>::Ones(1, context_dim))};
}

/// Standard-normal draw of width d_c from the caller's stream.
Matrix<float> draw_context_noise(int context_dim, Rng& rng);

/// Reparameterized sample c = mu + sigma * noise, or c = mu when
/// `deterministic`. Throws std::domain_error if any sigma <= 0.
template <typename Scalar>
Tensor<Scalar> sample_context(const ContextDistribution<Scalar>& dist, const Matrix<Scalar>& noise,
                              bool deterministic) {
  if ((dist.sigma.value().array() <= Scalar(0)).any()) {
    throw std::domain_error("sample_context: sigma must be strictly positive");
  }
  if (deterministic) return dist.mu;
  if (noise.rows() != 1 || noise.cols() != dist.mu.cols()) {
    throw DimensionError("sample_context: noise width mismatch");
  }
  auto& tape = *dist.mu.tape();
  return dist.mu + dist.sigma * tape.leaf(dist.mu.shape(), noise);
}

/// Maps a context [1 x d_c] through each layer's affine generator, splits
/// the output into a weight matrix and bias, and L2-normalizes the weight
/// rows when `apply_wn` is set. Biases are never normalized.
template <typename Scalar>
GeneratedWeights<Scalar> generate_weights(const MetaNet& net, const BoundParameters<Scalar>& params,
                                          const Tensor<Scalar>& context, bool apply_wn) {
  const auto& cfg = net.config;
  if (context.size() != cfg.context_dim) {
    throw DimensionError("generate_weights: context width " + std::to_string(context.size()) + ", expected " +
                         std::to_string(cfg.context_dim));
  }
  const auto c = reshape(context, Shape{1, static_cast<std::size_t>(cfg.context_dim)});
  GeneratedWeights<Scalar> out;
  out.normalized = apply_wn;
  const auto shapes = cfg.target_layer_shapes();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto [fan_out, fan_in] = shapes[l];
    const auto flat = linear(c, params[generator_weight_name(l)], params[generator_bias_name(l)]);
    auto weight = reshape(slice_cols(flat, 0, fan_out * fan_in),
                          Shape{static_cast<std::size_t>(fan_out), static_cast<std::size_t>(fan_in)});
    if (apply_wn) weight = l2_normalize_rows(weight);
    out.layers.push_back({weight, slice_cols(flat, fan_out * fan_in, fan_out)});
  }
  return out;
}

/// Value-level view of one task's context, for inspection and export.
struct TaskContext {
  Eigen::RowVectorXf mu;
  Eigen::RowVectorXf sigma;
  Eigen::RowVectorXf c;
  Eigen::RowVectorXf noise;  // the standard-normal draw behind c
};

/// Plain-value weights of one generated TargetNet.
struct WeightValues {
  std::vector<Matrix<float>> weights;
  std::vector<Eigen::RowVectorXf> biases;
  bool normalized = false;

  /// All weights then biases, layer by layer, as one row.
  Eigen::RowVectorXf flatten() const;
};

template <typename Scalar>
WeightValues to_values(const GeneratedWeights<Scalar>& g) {
  WeightValues v;
  v.normalized = g.normalized;
  for (const auto& layer : g.layers) {
    v.weights.push_back(layer.weight.value().template cast<float>());
    v.biases.push_back(layer.bias.value().row(0).template cast<float>());
  }
  return v;
}

/// Inference-mode context for one support set. The noise is drawn from
/// `rng` even in deterministic mode so streams stay aligned across modes.
TaskContext infer_context(const MetaNet& net, const Matrix<float>& support_inputs, Rng& rng, bool deterministic);

/// Weights generated from a given context value.
WeightValues generate_weight_values(const MetaNet& net, const Eigen::RowVectorXf& context, bool apply_wn);

/// Weights from the generator of `net` driven by c ~ N(0, I) without any
/// encoder. An untrained `net` gives the "random weights" reference point.
WeightValues random_prior_weights(const MetaNet& net, Rng& rng, bool apply_wn);

}  // namespace lgmnet
