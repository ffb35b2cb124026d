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

#include "lgmnet/checkpoint.hpp"
#include "lgmnet/evaluation.hpp"
#include "lgmnet/training.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace lgmnet {
namespace {

class EvalFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainConfig cfg;
    cfg.dataset = DatasetKind::kBlobs;
    cfg.tasks_per_batch = 4;
    cfg.seed = 5;
    state_ = new TrainingState(init_training(cfg));
    source_ = new TaskSource(make_task_source(cfg));
    train(*state_, *source_, 300);
  }
  static void TearDownTestSuite() {
    delete state_;
    delete source_;
  }
  static EvalOptions small(EvalMode mode = EvalMode::kPlain) {
    EvalOptions o;
    o.n_tasks = 40;
    o.mode = mode;
    return o;
  }
  static TrainingState* state_;
  static TaskSource* source_;
};
TrainingState* EvalFixture::state_ = nullptr;
TaskSource* EvalFixture::source_ = nullptr;

TEST_F(EvalFixture, SameSeedSameReport) {
  for (auto mode : {EvalMode::kPlain, EvalMode::kDeterministic, EvalMode::kEnsemble}) {
    Rng a(3), b(3);
    const auto r1 = evaluate(state_->net, *source_, small(mode), a);
    const auto r2 = evaluate(state_->net, *source_, small(mode), b);
    EXPECT_EQ(r1.per_task, r2.per_task) << to_string(mode);
    EXPECT_EQ(report_json(r1, true), report_json(r2, true));
  }
}

TEST_F(EvalFixture, ReportStatistics) {
  Rng rng(4);
  const auto r = evaluate(state_->net, *source_, small(), rng);
  ASSERT_EQ(r.per_task.size(), 40u);
  EXPECT_EQ(r.n_tasks, 40);
  double mean = 0;
  for (double a : r.per_task) mean += a / 40;
  double ss = 0;
  for (double a : r.per_task) ss += (a - mean) * (a - mean);
  EXPECT_NEAR(r.mean_accuracy, mean, 1e-12);
  EXPECT_NEAR(r.stddev, std::sqrt(ss / 39), 1e-12);
  EXPECT_NEAR(r.ci95, 1.96 * r.stddev / std::sqrt(40.0), 1e-12);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["dataset"], "blobs");
  EXPECT_NEAR(j["mean_accuracy"].get<double>(), r.mean_accuracy, 1e-12);
  EXPECT_FALSE(j.contains("per_task"));
}

TEST_F(EvalFixture, EvaluationLeavesTheModelUntouched) {
  const auto before = serialize_checkpoint(*state_);
  Rng rng(5);
  evaluate(state_->net, *source_, small(EvalMode::kEnsemble), rng);
  EXPECT_EQ(before, serialize_checkpoint(*state_));
}

TEST_F(EvalFixture, DeterministicModeGivesIdenticalWeights) {
  Rng rng(6);
  const auto task = sample_task(source_->dataset, source_->split.test_classes, 5, 1, 15, rng);
  const auto a = task_weights(state_->net, task.support_x, EvalMode::kDeterministic, 1, rng);
  const auto b = task_weights(state_->net, task.support_x, EvalMode::kDeterministic, 1, rng);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].flatten(), b[0].flatten());
  const auto e = task_weights(state_->net, task.support_x, EvalMode::kEnsemble, 7, rng);
  EXPECT_EQ(e.size(), 7u);
  EXPECT_NE(e[0].flatten(), e[1].flatten());
}

TEST_F(EvalFixture, WeightDistributionExport) {
  Rng rng(7);
  std::vector<TaskInstance> tasks;
  for (int i = 0; i < 5; ++i) tasks.push_back(sample_task(source_->dataset, source_->split.test_classes, 5, 1, 15, rng));
  const auto dist = export_weight_distribution(state_->net, tasks, 12, false, rng);
  EXPECT_EQ(dist.points.rows(), 60);
  EXPECT_EQ(dist.task_ids.size(), 60u);
  EXPECT_EQ(dist.projection.rows(), 60);
  EXPECT_EQ(dist.projection.cols(), 2);
  std::stringstream raw;
  write_weights_csv(dist, raw);
  int lines = 0;
  for (std::string line; std::getline(raw, line);) ++lines;
  EXPECT_EQ(lines, 61);

  const auto det = export_weight_distribution(state_->net, tasks, 12, true, rng);
  ASSERT_EQ(det.points.rows(), 60);
  for (int r = 1; r < 12; ++r) EXPECT_EQ(det.points.row(r), det.points.row(0));
}

TEST_F(EvalFixture, BoundaryGridAndSupportCells) {
  Rng rng(8);
  const auto task = sample_task(source_->dataset, source_->split.test_classes, 5, 1, 15, rng);
  const auto w = task_weights(state_->net, task.support_x, EvalMode::kDeterministic, 1, rng);
  const auto classifier = matching_classifier(w[0], task);
  const auto grid = export_boundary(classifier, 2, BoundingBox{});
  EXPECT_EQ(grid.labels.size(), 4u);
  EXPECT_NEAR(grid.centers(0, 0), -0.6f, 1e-6f);
  EXPECT_NEAR(grid.centers(3, 1), 0.6f, 1e-6f);
  std::stringstream csv;
  write_boundary_csv(grid, csv);
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 5);
  EXPECT_EQ(classifier(task.support_x), task.support_y);
  const auto again = export_boundary(classifier, 16, BoundingBox{});
  EXPECT_EQ(again.labels, export_boundary(classifier, 16, BoundingBox{}).labels);
}

TEST(Boundary, BadInputsThrow) {
  EXPECT_ANY_THROW(parse_bbox("1,2,3"));
  EXPECT_ANY_THROW(parse_bbox("1,0,0,1"));
  const auto box = parse_bbox("-2,2,-1,1");
  EXPECT_EQ(box.x_min, -2.0f);
  EXPECT_EQ(box.y_max, 1.0f);
  EXPECT_ANY_THROW(export_boundary([](const Matrix<float>& m) { return std::vector<int>(m.rows(), 0); }, 0, {}));
}

TEST(MaxVote, MajorityAndTies) {
  EXPECT_EQ(max_vote({{0, 1, 2}, {0, 2, 1}, {1, 2, 0}}, 3), (std::vector<int>{0, 2, 0}));
  EXPECT_EQ(max_vote({{2}, {1}}, 3), (std::vector<int>{1}));
  EXPECT_TRUE(max_vote({}, 3).empty());
}

TEST(EvalMode, NamesRoundTrip) {
  for (auto m : {EvalMode::kPlain, EvalMode::kDeterministic, EvalMode::kEnsemble}) {
    EXPECT_EQ(parse_eval_mode(to_string(m)), m);
  }
  EXPECT_ANY_THROW(parse_eval_mode("bagging"));
}

TEST(Baseline, MemorizesBlobsSupport) {
  const auto ds = generate_dataset(DatasetKind::kBlobs, 2);
  const auto split = split_meta(ds, 2);
  Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    const auto task = sample_task(ds, split.test_classes, 5, 1, 15, rng);
    const auto r = direct_train_baseline(task, {16, 12, 8}, kBaselineSteps, kBaselineLr, rng);
    EXPECT_EQ(r.support_accuracy, 1.0);
  }
}

TEST(Baseline, ZeroStepsIsNearChance) {
  TrainConfig cfg;
  cfg.dataset = DatasetKind::kBlobs;
  const auto source = make_task_source(cfg);
  EvalOptions o;
  o.n_tasks = 200;
  Rng rng(10);
  const auto acc = baseline_accuracies(source, o, {16, 12, 8}, 0, kBaselineLr, rng);
  double mean = 0;
  for (double a : acc) mean += a / static_cast<double>(acc.size());
  EXPECT_NEAR(mean, 0.2, 0.05);
}

TEST(Pca, RecoversTheDominantAxis) {
  Matrix<float> pts(4, 3);
  pts << -2, 0, 0, -1, 0.1f, 0, 1, -0.1f, 0, 2, 0, 0;
  const auto p = pca_project(pts, 2);
  EXPECT_NEAR(p(0, 0), -2.0, 0.05);
  EXPECT_NEAR(p(3, 0), 2.0, 0.05);
}

TEST(Pairwise, SeparatedGroups) {
  Matrix<float> pts(4, 1);
  pts << 0, 0.1f, 5, 5.1f;
  const std::vector<int> g = {0, 0, 1, 1};
  const auto d = mean_pairwise_distances(pts, g);
  EXPECT_NEAR(d.intra, 0.1, 1e-6);
  EXPECT_NEAR(d.inter, 5.0, 1e-6);
}

TEST(Pairwise, PermutationTestSeparatesRealFromShuffledGroups) {
  Rng rng(11);
  std::normal_distribution<float> n;
  Matrix<float> pts(30, 2);
  std::vector<int> groups;
  for (int i = 0; i < 30; ++i) {
    groups.push_back(i / 10);
    pts(i, 0) = n(rng) * 0.1f + static_cast<float>(i / 10) * 3.0f;
    pts(i, 1) = n(rng) * 0.1f;
  }
  EXPECT_LT(permutation_test(pts, groups, 199, rng), 0.05);
  Matrix<float> noise(30, 2);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = n(rng);
  EXPECT_GT(permutation_test(noise, groups, 199, rng), 0.01);
}

}  // namespace
}  // namespace lgmnet
