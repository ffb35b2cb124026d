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

#include "lgmnet/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lgmnet {
namespace {

void put_real(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

void put_real(std::ostream& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

Matrix<float> uniform(Eigen::Index rows, Eigen::Index cols, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::kPlain: return "plain";
    case EvalMode::kDeterministic: return "deterministic";
    case EvalMode::kEnsemble: return "ensemble";
  }
  return "unknown";
}

EvalMode parse_eval_mode(std::string_view name) {
  if (name == "plain") return EvalMode::kPlain;
  if (name == "deterministic") return EvalMode::kDeterministic;
  if (name == "ensemble") return EvalMode::kEnsemble;
  throw std::invalid_argument("unknown evaluation mode '" + std::string(name) + "'");
}

void summarize(EvalReport& report) {
  const auto n = report.per_task.size();
  report.n_tasks = static_cast<int>(n);
  if (n == 0) {
    report.mean_accuracy = report.stddev = report.ci95 = 0.0;
    return;
  }
  const double mean = std::accumulate(report.per_task.begin(), report.per_task.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double a : report.per_task) ss += (a - mean) * (a - mean);
  report.mean_accuracy = mean;
  report.stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  report.ci95 = 1.96 * report.stddev / std::sqrt(static_cast<double>(n));
}

std::string report_json(const EvalReport& report, bool include_per_task) {
  nlohmann::ordered_json j;
  j["dataset"] = report.dataset;
  j["split"] = report.options.side == SplitSide::kTest ? "test" : "train";
  j["mode"] = to_string(report.options.mode);
  if (report.options.mode == EvalMode::kEnsemble) j["ensemble_size"] = report.options.ensemble_size;
  j["n_way"] = report.options.n_way;
  j["k_shot"] = report.options.k_shot;
  j["n_query"] = report.options.n_query;
  j["tasks"] = report.n_tasks;
  j["mean_accuracy"] = report.mean_accuracy;
  j["stddev"] = report.stddev;
  j["ci95"] = report.ci95;
  if (include_per_task) j["per_task"] = report.per_task;
  return j.dump(2);
}

std::vector<WeightValues> task_weights(const MetaNet& net, const Matrix<float>& support_x, EvalMode mode,
                                       int ensemble_size, Rng& rng) {
  const bool deterministic = mode == EvalMode::kDeterministic || net.config.deterministic_context;
  const auto ctx = infer_context(net, support_x, rng, deterministic);
  std::vector<WeightValues> out;
  out.push_back(generate_weight_values(net, ctx.c, net.config.weight_norm));
  if (mode == EvalMode::kEnsemble) {
    if (ensemble_size < 1) throw std::invalid_argument("ensemble size must be at least 1");
    for (int m = 1; m < ensemble_size; ++m) {
      Eigen::RowVectorXf c = ctx.mu;
      if (!deterministic) {
        const Matrix<float> noise = draw_context_noise(net.config.context_dim, rng);
        c += ctx.sigma.cwiseProduct(noise.row(0));
      }
      out.push_back(generate_weight_values(net, c, net.config.weight_norm));
    }
  }
  return out;
}

std::vector<int> max_vote(const std::vector<std::vector<int>>& predictions, int n_way) {
  if (predictions.empty()) return {};
  const std::size_t n = predictions.front().size();
  std::vector<int> out(n);
  std::vector<int> votes(static_cast<std::size_t>(n_way));
  for (std::size_t q = 0; q < n; ++q) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& p : predictions) ++votes.at(static_cast<std::size_t>(p.at(q)));
    out[q] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

EvalReport evaluate(const MetaNet& net, const TaskSource& source, const EvalOptions& options, Rng& rng) {
  if (net.params.size() == 0) throw std::invalid_argument("evaluate: model has no parameters");
  if (options.n_tasks < 1) throw std::invalid_argument("evaluate: task count must be positive");
  EvalReport report;
  report.dataset = to_string(source.dataset.kind);
  report.options = options;
  const auto& classes = classes_on(source.split, options.side);
  for (int t = 0; t < options.n_tasks; ++t) {
    const auto task = sample_task(source.dataset, classes, options.n_way, options.k_shot, options.n_query, rng);
    const auto weights = task_weights(net, task.support_x, options.mode, options.ensemble_size, rng);
    std::vector<std::vector<int>> preds;
    for (const auto& w : weights) {
      preds.push_back(classify(w, task.support_x, task.support_y, task.n_way, task.query_x).predictions);
    }
    const auto final_preds = preds.size() == 1 ? preds.front() : max_vote(preds, task.n_way);
    report.per_task.push_back(accuracy(final_preds, task.query_y));
  }
  summarize(report);
  return report;
}

std::vector<int> BaselineModel::predict(const Matrix<float>& inputs) const {
  const Matrix<float> emb = embed_values(trunk, inputs);
  const Matrix<float> logits = (emb * head_weight.transpose()).rowwise() + head_bias;
  return argmax_rows(logits);
}

BaselineResult direct_train_baseline(const TaskInstance& task, const std::vector<int>& widths, int steps, float lr,
                                     Rng& rng) {
  if (widths.empty()) throw std::invalid_argument("direct_train_baseline: no trunk layers");
  ParameterStore store;
  int in = static_cast<int>(task.support_x.cols());
  for (std::size_t l = 0; l < widths.size(); ++l) {
    store.add("trunk" + std::to_string(l) + "/weight", uniform(widths[l], in, std::sqrt(6.0f / in), rng));
    store.add("trunk" + std::to_string(l) + "/bias", Matrix<float>::Zero(1, widths[l]));
    in = widths[l];
  }
  store.add("head/weight", uniform(task.n_way, in, std::sqrt(3.0f / in), rng));
  store.add("head/bias", Matrix<float>::Zero(1, task.n_way));

  AdamState adam = AdamState::zeros_like(store);
  const Matrix<float> targets = one_hot<float>(task.support_y, task.n_way);
  for (int s = 0; s < steps; ++s) {
    Tape<float> tape;
    const BoundParameters<float> params(tape, store);
    Tensor<float> h = tape.leaf(task.support_x);
    for (std::size_t l = 0; l < widths.size(); ++l) {
      h = linear(h, params["trunk" + std::to_string(l) + "/weight"], params["trunk" + std::to_string(l) + "/bias"]);
      if (l + 1 < widths.size()) h = relu(h);
    }
    const auto logits = linear(h, params["head/weight"], params["head/bias"]);
    const auto loss = softmax_cross_entropy(logits, tape.leaf(targets));
    tape.backward(loss);
    params.export_grads(store);
    adam_step(store, adam, lr);
  }

  BaselineResult result;
  result.model.trunk.normalized = false;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    result.model.trunk.weights.push_back(store.at("trunk" + std::to_string(l) + "/weight").value);
    result.model.trunk.biases.push_back(store.at("trunk" + std::to_string(l) + "/bias").value.row(0));
  }
  result.model.head_weight = store.at("head/weight").value;
  result.model.head_bias = store.at("head/bias").value.row(0);
  result.support_accuracy = accuracy(result.model.predict(task.support_x), task.support_y);
  result.query_accuracy = accuracy(result.model.predict(task.query_x), task.query_y);
  return result;
}

std::vector<double> baseline_accuracies(const TaskSource& source, const EvalOptions& options,
                                        const std::vector<int>& widths, int steps, float lr, Rng& rng) {
  std::vector<double> out;
  const auto& classes = classes_on(source.split, options.side);
  for (int t = 0; t < options.n_tasks; ++t) {
    const auto task = sample_task(source.dataset, classes, options.n_way, options.k_shot, options.n_query, rng);
    out.push_back(direct_train_baseline(task, widths, steps, lr, rng).query_accuracy);
  }
  return out;
}

PointClassifier matching_classifier(const WeightValues& weights, const TaskInstance& task) {
  return [weights, task](const Matrix<float>& points) {
    return classify(weights, task.support_x, task.support_y, task.n_way, points).predictions;
  };
}

BoundingBox parse_bbox(const std::string& text) {
  std::stringstream ss(text);
  std::string field;
  std::vector<float> v;
  while (std::getline(ss, field, ',')) {
    float x = 0.0f;
    auto res = std::from_chars(field.data(), field.data() + field.size(), x);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
      throw std::invalid_argument("bad bounding box value '" + field + "'");
    }
    v.push_back(x);
  }
  if (v.size() != 4 || !(v[0] < v[1]) || !(v[2] < v[3])) {
    throw std::invalid_argument("bounding box must be xmin,xmax,ymin,ymax with min < max");
  }
  return {v[0], v[1], v[2], v[3]};
}

BoundaryGrid export_boundary(const PointClassifier& classify_points, int resolution, const BoundingBox& bbox) {
  if (resolution < 1) throw std::invalid_argument("grid resolution must be positive");
  BoundaryGrid grid;
  grid.resolution = resolution;
  grid.bbox = bbox;
  grid.centers.resize(static_cast<Eigen::Index>(resolution) * resolution, 2);
  const float dx = (bbox.x_max - bbox.x_min) / static_cast<float>(resolution);
  const float dy = (bbox.y_max - bbox.y_min) / static_cast<float>(resolution);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(r) * resolution + c;
      grid.centers(i, 0) = bbox.x_min + (static_cast<float>(c) + 0.5f) * dx;
      grid.centers(i, 1) = bbox.y_min + (static_cast<float>(r) + 0.5f) * dy;
    }
  }
  grid.labels = classify_points(grid.centers);
  return grid;
}

void write_boundary_csv(const BoundaryGrid& grid, std::ostream& out) {
  out << "x,y,label\n";
  for (Eigen::Index i = 0; i < grid.centers.rows(); ++i) {
    put_real(out, grid.centers(i, 0));
    out << ',';
    put_real(out, grid.centers(i, 1));
    out << ',' << grid.labels.at(static_cast<std::size_t>(i)) << '\n';
  }
}

void write_points_csv(const TaskInstance& task, std::ostream& out) {
  out << "x,y,label,role\n";
  auto rows = [&](const Matrix<float>& x, const std::vector<int>& y, const char* role) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      put_real(out, x(i, 0));
      out << ',';
      put_real(out, x(i, 1));
      out << ',' << y[static_cast<std::size_t>(i)] << ',' << role << '\n';
    }
  };
  rows(task.support_x, task.support_y, "support");
  rows(task.query_x, task.query_y, "query");
}

WeightDistribution export_weight_distribution(const MetaNet& net, const std::vector<TaskInstance>& tasks,
                                              int samples_per_task, bool deterministic, Rng& rng) {
  if (samples_per_task < 1) throw std::invalid_argument("samples per task must be positive");
  const EvalMode mode = deterministic ? EvalMode::kDeterministic : EvalMode::kEnsemble;
  std::vector<Eigen::RowVectorXf> rows;
  WeightDistribution dist;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto sets = task_weights(net, tasks[t].support_x, mode, samples_per_task, rng);
    for (int s = 0; s < samples_per_task; ++s) {
      rows.push_back(sets[static_cast<std::size_t>(s) % sets.size()].flatten());
      dist.task_ids.push_back(static_cast<int>(t));
    }
  }
  if (rows.empty()) return dist;
  dist.points.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) dist.points.row(static_cast<Eigen::Index>(i)) = rows[i];
  dist.projection = pca_project(dist.points, 2);
  return dist;
}

Matrix<double> pca_project(const Matrix<float>& points, int components) {
  const Eigen::MatrixXd x = points.cast<double>();
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index k = std::min<Eigen::Index>(components, svd.matrixV().cols());
  Eigen::MatrixXd axes = svd.matrixV().leftCols(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    axes.col(j).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, j) < 0) axes.col(j) *= -1.0;
  }
  Matrix<double> out = Matrix<double>::Zero(points.rows(), components);
  out.leftCols(k) = centered * axes;
  return out;
}

void write_weights_csv(const WeightDistribution& dist, std::ostream& out) {
  out << "task";
  for (Eigen::Index j = 0; j < dist.points.cols(); ++j) out << ",w" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < dist.points.rows(); ++i) {
    out << dist.task_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < dist.points.cols(); ++j) {
      out << ',';
      put_real(out, dist.points(i, j));
    }
    out << '\n';
  }
}

void write_projection_csv(const WeightDistribution& dist, std::ostream& out) {
  out << "task,pc1,pc2\n";
  for (Eigen::Index i = 0; i < dist.projection.rows(); ++i) {
    out << dist.task_ids[static_cast<std::size_t>(i)] << ',';
    put_real(out, dist.projection(i, 0));
    out << ',';
    put_real(out, dist.projection(i, 1));
    out << '\n';
  }
}

namespace {

Eigen::MatrixXd distance_matrix(const Matrix<float>& points) {
  const Eigen::MatrixXd x = points.cast<double>();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

PairwiseDistances split_means(const Eigen::MatrixXd& d, const std::vector<int>& groups) {
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
      if (groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)]) {
        intra += d(i, j);
        ++n_intra;
      } else {
        inter += d(i, j);
        ++n_inter;
      }
    }
  }
  return {n_intra ? intra / static_cast<double>(n_intra) : 0.0, n_inter ? inter / static_cast<double>(n_inter) : 0.0};
}

}  // namespace

PairwiseDistances mean_pairwise_distances(const Matrix<float>& points, const std::vector<int>& groups) {
  if (static_cast<Eigen::Index>(groups.size()) != points.rows()) {
    throw std::invalid_argument("mean_pairwise_distances: one group id per row needed");
  }
  return split_means(distance_matrix(points), groups);
}

double permutation_test(const Matrix<float>& points, const std::vector<int>& groups, int permutations, Rng& rng) {
  if (static_cast<Eigen::Index>(groups.size()) != points.rows()) {
    throw std::invalid_argument("permutation_test: one group id per row needed");
  }
  if (permutations < 1) throw std::invalid_argument("permutation_test: need at least one permutation");
  const auto d = distance_matrix(points);
  const auto observed = split_means(d, groups);
  const double stat = observed.inter - observed.intra;
  std::vector<int> shuffled = groups;
  int extreme = 0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto m = split_means(d, shuffled);
    if (m.inter - m.intra >= stat) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
}

}  // namespace lgmnet
