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

#include "lgmnet/training.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lgmnet {

enum class EvalMode { kPlain, kDeterministic, kEnsemble };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view name);

struct EvalOptions {
  SplitSide side = SplitSide::kTest;
  int n_tasks = 500;
  int n_way = 5;
  int k_shot = 1;
  int n_query = 15;
  EvalMode mode = EvalMode::kPlain;
  int ensemble_size = 10;
};

struct EvalReport {
  std::string dataset;
  EvalOptions options;
  int n_tasks = 0;
  double mean_accuracy = 0.0;
  double stddev = 0.0;  // sample standard deviation of per-task accuracies
  double ci95 = 0.0;    // 1.96 * stddev / sqrt(n_tasks)
  std::vector<double> per_task;
};

/// Mean, sample standard deviation and 95% half-width of `per_task`.
void summarize(EvalReport& report);

std::string report_json(const EvalReport& report, bool include_per_task = false);

/// Generated weights for one task's support set under `mode`. Ensemble mode
/// returns `ensemble_size` weight sets drawn from one encoding.
std::vector<WeightValues> task_weights(const MetaNet& net, const Matrix<float>& support_x, EvalMode mode,
                                       int ensemble_size, Rng& rng);

/// Per-query max vote over the predictions of several weight sets; ties go
/// to the lowest class.
std::vector<int> max_vote(const std::vector<std::vector<int>>& predictions, int n_way);

/// Samples `n_tasks` episodes from the chosen split side and scores each.
/// `net` is only read.
EvalReport evaluate(const MetaNet& net, const TaskSource& source, const EvalOptions& options, Rng& rng);

/// A TargetNet trunk (2 -> 16 -> 12 -> 8) plus a linear N-way head trained
/// from scratch on one task's support set with softmax cross-entropy.
struct BaselineModel {
  WeightValues trunk;
  Matrix<float> head_weight;  // N x 8
  Eigen::RowVectorXf head_bias;

  std::vector<int> predict(const Matrix<float>& inputs) const;
};

struct BaselineResult {
  BaselineModel model;
  double support_accuracy = 0.0;
  double query_accuracy = 0.0;
};

inline constexpr int kBaselineSteps = 200;
inline constexpr float kBaselineLr = 1e-2f;

BaselineResult direct_train_baseline(const TaskInstance& task, const std::vector<int>& widths, int steps, float lr,
                                     Rng& rng);

using PointClassifier = std::function<std::vector<int>(const Matrix<float>&)>;

/// Classifier that matches points against the task's support set with the
/// given generated weights.
PointClassifier matching_classifier(const WeightValues& weights, const TaskInstance& task);

struct BoundingBox {
  float x_min = -1.2f, x_max = 1.2f, y_min = -1.2f, y_max = 1.2f;
};

BoundingBox parse_bbox(const std::string& text);  // "xmin,xmax,ymin,ymax"

struct BoundaryGrid {
  int resolution = 0;
  BoundingBox bbox;
  Matrix<float> centers;  // resolution^2 x 2, row-major over (y, x)
  std::vector<int> labels;
};

inline constexpr int kDefaultGridResolution = 256;

BoundaryGrid export_boundary(const PointClassifier& classify_points, int resolution, const BoundingBox& bbox);

/// CSV `x,y,label`.
void write_boundary_csv(const BoundaryGrid& grid, std::ostream& out);
/// CSV `x,y,label,role` with role support or query.
void write_points_csv(const TaskInstance& task, std::ostream& out);

struct WeightDistribution {
  std::vector<int> task_ids;
  Matrix<float> points;     // one flattened weight vector per row
  Matrix<double> projection;  // first two principal components
};

/// `samples_per_task` rows per task; with `deterministic` they repeat c = mu.
WeightDistribution export_weight_distribution(const MetaNet& net, const std::vector<TaskInstance>& tasks,
                                              int samples_per_task, bool deterministic, Rng& rng);

/// Principal-component scores of the centred rows, with each axis signed so
/// its largest loading is positive.
Matrix<double> pca_project(const Matrix<float>& points, int components);

/// CSV `task,w0,w1,...`.
void write_weights_csv(const WeightDistribution& dist, std::ostream& out);
/// CSV `task,pc1,pc2`.
void write_projection_csv(const WeightDistribution& dist, std::ostream& out);

struct PairwiseDistances {
  double intra = 0.0;
  double inter = 0.0;
};

/// Mean Euclidean distance over pairs of rows in the same group and in
/// different groups.
PairwiseDistances mean_pairwise_distances(const Matrix<float>& points, const std::vector<int>& groups);

/// One-sided permutation test of "between-group distances exceed
/// within-group distances". Returns the p-value.
double permutation_test(const Matrix<float>& points, const std::vector<int>& groups, int permutations, Rng& rng);

/// Fraction of correctly classified queries on each of `n_tasks` tasks for
/// the direct-train baseline.
std::vector<double> baseline_accuracies(const TaskSource& source, const EvalOptions& options,
                                        const std::vector<int>& widths, int steps, float lr, Rng& rng);

}  // namespace lgmnet
