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

#include "lgmnet/gradcheck.hpp"

#include "lgmnet/random.hpp"
#include "lgmnet/targetnet.hpp"
#include "lgmnet/training.hpp"

#include <limits>
#include <random>

namespace lgmnet {
namespace {

template <typename T>
using ScalarOf = typename std::decay_t<decltype(std::declval<T>()[0].value())>::Scalar;

Matrix<float> uniform(Eigen::Index rows, Eigen::Index cols, float lo, float hi, Rng& rng) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Matrix<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Values with magnitude in [lo, hi] and random sign.
Matrix<float> away_from_zero(Eigen::Index rows, Eigen::Index cols, float lo, float hi, Rng& rng) {
  Matrix<float> m = uniform(rows, cols, lo, hi, rng);
  std::bernoulli_distribution flip(0.5);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (flip(rng)) m.data()[i] = -m.data()[i];
  }
  return m;
}

/// sum(y * w) for a fixed random w, so every output coordinate matters.
template <typename S>
Tensor<S> probe(Tape<S>& tape, const Tensor<S>& y, const Matrix<float>& w) {
  const Matrix<S> weights = Eigen::Map<const Matrix<float>>(w.data(), y.rows(), y.cols()).cast<S>();
  return reduce_sum(y * tape.leaf(y.shape(), weights));
}

/// Pipeline draws keep every vector that gets L2-normalized (generated
/// weight rows, TargetNet embeddings) at least this long, so the check stays
/// away from the non-smooth point of the normalization.
constexpr double kMinNormalizedNorm = 0.5;

double smallest_normalized_norm(const MetaNet& net, const std::vector<Matrix<float>>& values,
                                const std::vector<TaskInstance>& tasks) {
  Tape<double> tape;
  std::vector<Tensor<double>> leaves;
  for (const auto& v : values) leaves.push_back(tape.leaf(Matrix<double>(v.cast<double>())));
  const BoundParameters<double> params(net.params, leaves);
  Eigen::Index rows = 0;
  for (const auto& t : tasks) rows += t.support_x.rows();
  Matrix<double> stacked(rows, net.config.input_dim);
  Eigen::Index at = 0;
  for (const auto& t : tasks) {
    stacked.middleRows(at, t.support_x.rows()) = t.support_x.cast<double>();
    at += t.support_x.rows();
  }
  const auto encoded = encode_rows(net, params, tape.leaf(std::move(stacked)), ItnMode::kTraining);
  double smallest = std::numeric_limits<double>::infinity();
  at = 0;
  for (const auto& t : tasks) {
    const auto dist = pool_context(slice_rows(encoded, at, t.support_x.rows()), net.config.context_dim);
    at += t.support_x.rows();
    for (const auto& layer : generate_weights(net, params, dist.mu, false).layers) {
      smallest = std::min(smallest, layer.weight.value().rowwise().norm().minCoeff());
    }
    const auto weights = generate_weights(net, params, dist.mu, net.config.weight_norm);
    for (const auto* x : {&t.support_x, &t.query_x}) {
      const auto emb = embed(weights, tape.leaf(Matrix<double>(x->cast<double>())));
      smallest = std::min(smallest, emb.value().rowwise().norm().minCoeff());
    }
  }
  return smallest;
}

}  // namespace

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, const GradCheckOptions& opt) {
  Rng rng = derive_rng({seed, 0x67726164ULL});
  std::vector<GradCheckResult> out;

  {
    const auto w = uniform(3, 2, -1, 1, rng);
    out.push_back(gradient_check("matmul", {uniform(3, 4, -1, 1, rng), uniform(4, 2, -1, 1, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, matmul(x[0], x[1]), w); }, opt));
  }
  {
    const auto w = uniform(2, 3, -1, 1, rng);
    const auto a = uniform(2, 3, -1, 1, rng), b = away_from_zero(2, 3, 0.5f, 1.5f, rng);
    out.push_back(gradient_check("add", {a, b}, [&](auto& t, const auto& x) { return probe(t, x[0] + x[1], w); }, opt));
    out.push_back(gradient_check("sub", {a, b}, [&](auto& t, const auto& x) { return probe(t, x[0] - x[1], w); }, opt));
    out.push_back(gradient_check("mul", {a, b}, [&](auto& t, const auto& x) { return probe(t, x[0] * x[1], w); }, opt));
    out.push_back(gradient_check("div", {a, b}, [&](auto& t, const auto& x) { return probe(t, x[0] / x[1], w); }, opt));
    out.push_back(gradient_check("scalar_mul", {a}, [&](auto& t, const auto& x) {
      using S = ScalarOf<decltype(x)>;
      return probe(t, x[0] * S(-1.7), w);
    }, opt));
    out.push_back(gradient_check("scalar_div", {a}, [&](auto& t, const auto& x) {
      using S = ScalarOf<decltype(x)>;
      return probe(t, elementwise(x[0], S(0.8), Elementwise::kDiv), w);
    }, opt));
  }
  {
    const auto w = uniform(3, 4, -1, 1, rng);
    out.push_back(gradient_check("relu", {away_from_zero(3, 4, 0.1f, 1.0f, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, relu(x[0]), w); }, opt));
    out.push_back(gradient_check("softplus", {uniform(3, 4, -3, 3, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, softplus(x[0]), w); }, opt));
    out.push_back(gradient_check("exp", {uniform(3, 4, -1, 1, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, exp(x[0]), w); }, opt));
    out.push_back(gradient_check("transpose", {uniform(4, 3, -1, 1, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, transpose(x[0]), w); }, opt));
    out.push_back(gradient_check("reshape", {uniform(2, 6, -1, 1, rng)}, [&](auto& t, const auto& x) {
      return probe(t, reshape(x[0], Shape{3, 4}), w);
    }, opt));
  }
  {
    const auto x0 = uniform(3, 4, -1, 1, rng);
    const auto w_cols = uniform(1, 4, -1, 1, rng), w_rows = uniform(1, 3, -1, 1, rng);
    out.push_back(gradient_check("reduce_mean_axis0", {x0},
                                 [&](auto& t, const auto& x) { return probe(t, reduce_mean(x[0], 0), w_cols); }, opt));
    out.push_back(gradient_check("reduce_mean_axis1", {x0},
                                 [&](auto& t, const auto& x) { return probe(t, reduce_mean(x[0], 1), w_rows); }, opt));
    out.push_back(gradient_check("reduce_sum", {x0}, [&](auto&, const auto& x) { return reduce_sum(x[0] * x[0]); }, opt));
    const auto w_slice = uniform(3, 2, -1, 1, rng), w_rslice = uniform(2, 4, -1, 1, rng);
    out.push_back(gradient_check("slice_cols", {x0},
                                 [&](auto& t, const auto& x) { return probe(t, slice_cols(x[0], 1, 2), w_slice); }, opt));
    out.push_back(gradient_check("slice_rows", {x0},
                                 [&](auto& t, const auto& x) { return probe(t, slice_rows(x[0], 1, 2), w_rslice); }, opt));
  }
  {
    const auto w = uniform(4, 3, -1, 1, rng);
    Matrix<float> rows = uniform(4, 3, -1, 1, rng);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const float n = rows.row(r).norm();
      rows.row(r) *= std::uniform_real_distribution<float>(0.5f, 2.0f)(rng) / n;
    }
    out.push_back(gradient_check("l2_normalize_rows", {rows},
                                 [&](auto& t, const auto& x) { return probe(t, l2_normalize_rows(x[0]), w); }, opt));
    out.push_back(gradient_check("cosine_similarity", {uniform(1, 5, -1, 1, rng), uniform(1, 5, -1, 1, rng)},
                                 [&](auto& t, const auto& x) {
                                   const Shape flat{5};
                                   return cosine_similarity(reshape(x[0], flat), reshape(x[1], flat));
                                 }, opt));
  }
  {
    Matrix<float> onehot = Matrix<float>::Zero(3, 5);
    std::uniform_int_distribution<int> cls(0, 4);
    for (Eigen::Index r = 0; r < 3; ++r) onehot(r, cls(rng)) = 1.0f;
    out.push_back(gradient_check("softmax_cross_entropy", {uniform(3, 5, -2, 2, rng)}, [&](auto& t, const auto& x) {
      using S = ScalarOf<decltype(x)>;
      return softmax_cross_entropy(x[0], t.leaf(Matrix<S>(onehot.template cast<S>())));
    }, opt));
    const auto w = uniform(3, 5, -1, 1, rng);
    out.push_back(gradient_check("softmax_rows", {uniform(3, 5, -2, 2, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, softmax_rows(x[0]), w); }, opt));
    const std::vector<int> labels = {1, 4, 0};
    out.push_back(gradient_check("probability_nll", {uniform(3, 5, -2, 2, rng)}, [&](auto&, const auto& x) {
      using S = ScalarOf<decltype(x)>;
      return probability_nll(softmax_rows(x[0]), labels, S(1e-9));
    }, opt));
  }
  {
    const auto w = uniform(5, 3, -1, 1, rng);
    out.push_back(gradient_check("linear", {uniform(5, 4, -1, 1, rng), uniform(3, 4, -1, 1, rng), uniform(1, 3, -1, 1, rng)},
                                 [&](auto& t, const auto& x) { return probe(t, linear(x[0], x[1], x[2]), w); }, opt));
    const auto w_bn = uniform(6, 3, -1, 1, rng);
    out.push_back(gradient_check("batch_norm_train",
                                 {uniform(6, 3, -1, 1, rng), uniform(1, 3, 0.5f, 1.5f, rng), uniform(1, 3, -0.5f, 0.5f, rng)},
                                 [&](auto& t, const auto& x) {
                                   using S = ScalarOf<decltype(x)>;
                                   return probe(t, batch_norm_train(x[0], x[1], x[2], S(1e-5)), w_bn);
                                 }, opt));
    const Eigen::RowVectorXf mean = uniform(1, 3, -0.2f, 0.2f, rng).row(0);
    const Eigen::RowVectorXf var = uniform(1, 3, 0.5f, 1.5f, rng).row(0);
    out.push_back(gradient_check("batch_norm_inference",
                                 {uniform(6, 3, -1, 1, rng), uniform(1, 3, 0.5f, 1.5f, rng), uniform(1, 3, -0.5f, 0.5f, rng)},
                                 [&](auto& t, const auto& x) {
                                   using S = ScalarOf<decltype(x)>;
                                   return probe(t,
                                                batch_norm_inference<S>(x[0], x[1], x[2], mean.template cast<S>(), var.template cast<S>(),
                                                                        S(1e-5)),
                                                w_bn);
                                 }, opt));
  }
  {
    TrainConfig cfg;
    cfg.n_way = 5;
    cfg.k_shot = 2;
    cfg.n_query = 2;
    cfg.seed = seed;
    cfg.model.context_dim = 4;
    cfg.model.encoder_hidden = {4, 4};
    cfg.model.target_widths = {4, 3};
    cfg.model.deterministic_context = true;
    const auto net = init_metanet(cfg.model, rng());
    const auto source = make_task_source(cfg);
    std::vector<TaskInstance> tasks;
    std::vector<Matrix<float>> noises;
    for (int i = 0; i < 4; ++i) {
      tasks.push_back(sample_task(source.dataset, source.split.train_classes, cfg.n_way, cfg.k_shot, cfg.n_query, rng));
      noises.push_back(draw_context_noise(cfg.model.context_dim, rng));
    }
    std::vector<Matrix<float>> inputs;
    do {
      inputs.clear();
      for (const auto& p : net.params.all()) {
        const bool scale = p.name.ends_with("/scale");
        inputs.push_back(scale ? uniform(p.value.rows(), p.value.cols(), 0.5f, 1.5f, rng)
                               : uniform(p.value.rows(), p.value.cols(), -1, 1, rng));
      }
    } while (smallest_normalized_norm(net, inputs, tasks) < kMinNormalizedNorm);
    out.push_back(gradient_check("pipeline", inputs, [&](auto& t, const auto& x) {
      using S = ScalarOf<decltype(x)>;
      const BoundParameters<S> params(net.params, x);
      return batch_forward(t, net, params, tasks, noises, ItnMode::kTraining).loss;
    }, opt));
  }
  return out;
}

}  // namespace lgmnet
