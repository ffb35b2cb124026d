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
#include "lgmnet/metanet.hpp"
#include "lgmnet/synthetic.hpp"
#include "lgmnet/targetnet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace lgmnet {
namespace {

Matrix<float> random_points(Eigen::Index rows, Rng& rng) {
  std::uniform_real_distribution<float> u(-1, 1);
  Matrix<float> m(rows, 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

TEST(PoolContext, MeanThenSoftplus) {
  Tape<double> t;
  Matrix<double> enc(2, 4);
  enc << 1, 2, 0, 0, 3, 4, 0, 0;
  const auto d = pool_context(t.leaf(enc), 2);
  EXPECT_DOUBLE_EQ(d.mu.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(d.mu.value()(0, 1), 3.0);
  EXPECT_NEAR(d.sigma.value()(0, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(d.sigma.value()(0, 1), std::log(2.0), 1e-12);
}

TEST(PoolContext, WrongWidthOrEmptyThrows) {
  Tape<float> t;
  EXPECT_THROW(pool_context(t.leaf(Matrix<float>::Zero(2, 5)), 2), DimensionError);
}

class MetaNetFixture : public ::testing::Test {
 protected:
  ModelConfig cfg;
  MetaNet net = init_metanet(cfg, 3);
};

TEST_F(MetaNetFixture, ContextIsInvariantToDuplicatingTheSupport) {
  Rng rng(1);
  const auto s = random_points(5, rng);
  Matrix<float> doubled(10, 2);
  doubled << s, s;
  Rng r1(0), r2(0);
  const auto a = infer_context(net, s, r1, true);
  const auto b = infer_context(net, doubled, r2, true);
  EXPECT_LT((a.mu - b.mu).cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_LT((a.sigma - b.sigma).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST_F(MetaNetFixture, ContextIsInvariantToSupportOrder) {
  Rng rng(2);
  const auto s = random_points(6, rng);
  const Matrix<float> reversed = s.colwise().reverse();
  Rng r1(9), r2(9);
  const auto a = infer_context(net, s, r1, false);
  const auto b = infer_context(net, reversed, r2, false);
  EXPECT_LT((a.c - b.c).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST_F(MetaNetFixture, DeterministicContextIsTheMean) {
  Rng rng(3);
  const auto ctx = infer_context(net, random_points(5, rng), rng, true);
  EXPECT_EQ(ctx.c, ctx.mu);
  EXPECT_TRUE((ctx.sigma.array() > 0).all());
}

TEST_F(MetaNetFixture, SampledContextsMatchTheDistribution) {
  Rng rng(4);
  const auto s = random_points(5, rng);
  const int n = 4000;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(cfg.context_dim);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(cfg.context_dim);
  TaskContext ctx;
  for (int i = 0; i < n; ++i) {
    ctx = infer_context(net, s, rng, false);
    sum += ctx.c.cast<double>();
    sq += ctx.c.cast<double>().array().square().matrix();
  }
  const Eigen::RowVectorXd mean = sum / n;
  const Eigen::RowVectorXd var = sq / n - mean.array().square().matrix();
  const Eigen::RowVectorXd sigma = ctx.sigma.cast<double>();
  for (int j = 0; j < cfg.context_dim; ++j) {
    EXPECT_NEAR(mean(j), ctx.mu(j), 4.0 * sigma(j) / std::sqrt(n));
    EXPECT_NEAR(var(j) / (sigma(j) * sigma(j)), 1.0, 0.1);
  }
}

TEST_F(MetaNetFixture, NonPositiveSigmaIsRejected) {
  Tape<float> t;
  ContextDistribution<float> d{t.leaf(Matrix<float>::Zero(1, 2)), t.leaf(Matrix<float>::Zero(1, 2))};
  EXPECT_THROW(sample_context(d, Matrix<float>(Matrix<float>::Zero(1, 2)), false), std::domain_error);
}

TEST_F(MetaNetFixture, WeightNormalizedRowsHaveUnitNorm) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ctx = infer_context(net, random_points(5, rng), rng, false);
    const auto w = generate_weight_values(net, ctx.c, true);
    ASSERT_EQ(w.weights.size(), cfg.target_widths.size());
    for (const auto& m : w.weights) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) EXPECT_NEAR(m.row(r).norm(), 1.0f, 1e-5f);
    }
  }
}

TEST_F(MetaNetFixture, LayerShapesFollowTheConfig) {
  const auto w = generate_weight_values(net, Eigen::RowVectorXf::Zero(cfg.context_dim), false);
  const auto shapes = cfg.target_layer_shapes();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    EXPECT_EQ(w.weights[l].rows(), shapes[l].first);
    EXPECT_EQ(w.weights[l].cols(), shapes[l].second);
    EXPECT_EQ(w.biases[l].size(), shapes[l].first);
  }
  EXPECT_THROW(generate_weight_values(net, Eigen::RowVectorXf::Zero(3), true), DimensionError);
}

TEST_F(MetaNetFixture, WeightsAreRecomputedForEachContext) {
  Eigen::RowVectorXf c = Eigen::RowVectorXf::LinSpaced(cfg.context_dim, -1, 1);
  const auto a = generate_weight_values(net, c, false);
  const auto b = generate_weight_values(net, 2.0f * c, false);
  const auto a_again = generate_weight_values(net, c, false);
  EXPECT_NE(a.flatten(), b.flatten());
  EXPECT_EQ(a.flatten(), a_again.flatten());
}

TEST_F(MetaNetFixture, RandomPriorIsReproducible) {
  Rng r1(12), r2(12);
  EXPECT_EQ(random_prior_weights(net, r1, true).flatten(), random_prior_weights(net, r2, true).flatten());
}

// A random continuous embedding still acts as a nearest-neighbour matcher, so
// the prior lands above 1/N; on concentric circles it stays far from useful.
TEST(RandomPrior, CirclesAccuracyIsFarBelowTrainedLevel) {
  ModelConfig cfg;
  cfg.use_encoder = false;
  const MetaNet net = init_metanet(cfg, 1);
  const auto ds = generate_dataset(DatasetKind::kCircles, 1);
  const auto split = split_meta(ds, 1);
  Rng rng(6);
  double total = 0;
  const int tasks = 200;
  for (int i = 0; i < tasks; ++i) {
    const auto task = sample_task(ds, split.test_classes, 5, 1, 15, rng);
    const auto w = random_prior_weights(net, rng, true);
    total += accuracy(classify(w, task.support_x, task.support_y, 5, task.query_x).predictions, task.query_y);
  }
  EXPECT_GT(total / tasks, 0.12);
  EXPECT_LT(total / tasks, 0.45);
}

TEST(Init, SameSeedSameParameters) {
  const ModelConfig cfg;
  const auto a = init_metanet(cfg, 5), b = init_metanet(cfg, 5), c = init_metanet(cfg, 6);
  ASSERT_EQ(a.params.size(), b.params.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params.all()[i].value, b.params.all()[i].value);
    differs = differs || a.params.all()[i].value != c.params.all()[i].value;
  }
  EXPECT_TRUE(differs);
}

TEST(Attention, TwoSupportsHandValues) {
  Tape<double> t;
  Matrix<double> q(1, 2), s(2, 2);
  q << 1, 0;
  s << 1, 0, 0, 1;
  const auto k = attention_kernel(t.leaf(q), t.leaf(s));
  const double e = std::exp(1.0);
  EXPECT_NEAR(k.value()(0, 0), e / (e + 1), 1e-12);
  EXPECT_NEAR(k.value()(0, 1), 1 / (e + 1), 1e-12);
  EXPECT_NEAR(k.value()(0, 0), 0.7310585786, 1e-9);
}

TEST(Attention, IdenticalSupportsGiveUniformWeights) {
  Tape<double> t;
  Matrix<double> q(2, 3), s(4, 3);
  q << 1, 2, 3, -1, 0, 2;
  s.rowwise() = Eigen::RowVector3d(0.5, -0.2, 0.1);
  const auto k = attention_kernel(t.leaf(q), t.leaf(s));
  EXPECT_LT((k.value().array() - 0.25).abs().maxCoeff(), 1e-12);
}

TEST(Attention, InvariantToPositiveEmbeddingScale) {
  Tape<double> t;
  Matrix<double> q = Matrix<double>::Random(3, 4), s = Matrix<double>::Random(5, 4);
  const auto a = attention_kernel(t.leaf(q), t.leaf(s));
  const auto b = attention_kernel(t.leaf(Matrix<double>(3.5 * q)), t.leaf(Matrix<double>(0.2 * s)));
  EXPECT_LT((a.value() - b.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, ProbabilityRowsSumToOne) {
  Tape<double> t;
  const auto k = attention_kernel(t.leaf(Matrix<double>(Matrix<double>::Random(6, 4))),
                                  t.leaf(Matrix<double>(Matrix<double>::Random(10, 4))));
  const std::vector<int> labels = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  const auto p = match_probabilities(k, t.leaf(one_hot<double>(labels, 5)));
  for (Eigen::Index r = 0; r < 6; ++r) EXPECT_NEAR(p.value().row(r).sum(), 1.0, 1e-12);
}

TEST(Attention, MismatchedWidthsThrow) {
  Tape<float> t;
  EXPECT_THROW(attention_kernel(t.leaf(Matrix<float>::Ones(1, 3)), t.leaf(Matrix<float>::Ones(2, 4))),
               DimensionError);
}

TEST(EpisodeLoss, HandValues) {
  Tape<double> t;
  Matrix<double> p(2, 2);
  p << 1, 0, 0.5, 0.5;
  EXPECT_NEAR(episode_loss(t.leaf(p), {0, 1}).item(), 0.5 * std::log(2.0), 1e-12);
  Matrix<double> wrong(1, 2);
  wrong << 1, 0;
  EXPECT_NEAR(episode_loss(t.leaf(wrong), {1}).item(), -std::log(1e-9), 1e-6);
}

TEST(ArgmaxRows, TiesGoToLowestIndex) {
  Matrix<float> m(3, 3);
  m << 0.2f, 0.5f, 0.5f, 0.4f, 0.4f, 0.4f, 0.1f, 0.1f, 0.9f;
  EXPECT_EQ(argmax_rows(m), (std::vector<int>{1, 0, 2}));
}

TEST(Classify, InvariantToSupportPermutation) {
  const ModelConfig cfg;
  const MetaNet net = init_metanet(cfg, 2);
  const auto ds = generate_dataset(DatasetKind::kCircles, 3);
  const auto split = split_meta(ds, 3);
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto task = sample_task(ds, split.test_classes, 5, 1, 15, rng);
    const auto ctx = infer_context(net, task.support_x, rng, true);
    const auto w = generate_weight_values(net, ctx.c, true);
    const auto base = classify(w, task.support_x, task.support_y, 5, task.query_x);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto p = permute_support(task, perm);
    const auto ctx_p = infer_context(net, p.support_x, rng, true);
    const auto w_p = generate_weight_values(net, ctx_p.c, true);
    const auto permuted = classify(w_p, p.support_x, p.support_y, 5, p.query_x);
    const float scale = std::max(1.0f, base.probabilities.cwiseAbs().maxCoeff());
    EXPECT_LT((base.probabilities - permuted.probabilities).cwiseAbs().maxCoeff() / scale, 1e-6f);
  }
}

}  // namespace
}  // namespace lgmnet
