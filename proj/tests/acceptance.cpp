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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include "lgmnet/checkpoint.hpp"
#include "lgmnet/evaluation.hpp"
#include "lgmnet/gradcheck.hpp"
#include "lgmnet/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

namespace {

using namespace lgmnet;

struct Verdict {
  int id;
  std::string title;
  bool passed;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Trained {
  TrainingState state;
  TaskSource source;
};

TrainConfig dataset_config(DatasetKind kind) {
  TrainConfig cfg;
  cfg.dataset = kind;
  cfg.n_way = kind == DatasetKind::kCircles ? 3 : 5;
  cfg.k_shot = 1;
  cfg.n_query = 15;
  cfg.tasks_per_batch = 16;
  cfg.total_batches = 20000;
  cfg.seed = 7;
  return cfg;
}

class Models {
 public:
  explicit Models(std::int64_t batches) : batches_(batches) {}

  const Trained& get(DatasetKind kind) {
    auto it = cache_.find(kind);
    if (it != cache_.end()) return it->second;
    auto cfg = dataset_config(kind);
    cfg.total_batches = batches_;
    Trained t{init_training(cfg), make_task_source(cfg)};
    const auto start = std::chrono::steady_clock::now();
    train(t.state, t.source, cfg.total_batches);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "trained " << to_string(kind) << " for " << cfg.total_batches << " batches in " << fmt("%.1f", secs)
              << " s\n";
    return cache_.emplace(kind, std::move(t)).first->second;
  }

 private:
  std::int64_t batches_;
  std::map<DatasetKind, Trained> cache_;
};

Verdict criterion1(Models& models) {
  bool ok = true;
  std::ostringstream d;
  for (auto kind : {DatasetKind::kBlobs, DatasetKind::kLines, DatasetKind::kSpirals, DatasetKind::kCircles}) {
    const auto& m = models.get(kind);
    EvalOptions o;
    o.n_tasks = 500;
    o.n_way = m.state.config.n_way;
    Rng rng = derive_rng({m.state.config.seed, 3});
    const auto r = evaluate(m.state.net, m.source, o, rng);
    ok = ok && r.mean_accuracy >= 0.97;
    d << to_string(kind) << ' ' << o.n_way << "-way " << fmt("%.4f", r.mean_accuracy) << " (ci95 "
      << fmt("%.4f", r.ci95) << ")  ";
  }
  return {1, "synthetic generalization >= 0.97", ok, d.str()};
}

Verdict criterion2() {
  std::size_t checks = 0, failed = 0;
  double worst = 0;
  std::string worst_name;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& r : run_gradchecks(seed)) {
      ++checks;
      if (!r.passed()) ++failed;
      if (r.max_error > worst) {
        worst = r.max_error;
        worst_name = r.name;
      }
    }
  }
  return {2, "gradients match finite differences", failed == 0,
          std::to_string(checks) + " checks over 20 seeds, " + std::to_string(failed) + " failed, worst " +
              fmt("%.2e", worst) + " (" + worst_name + ")"};
}

Verdict criterion3() {
  const ModelConfig cfg;
  const MetaNet net = init_metanet(cfg, 11);
  Rng rng(12);
  std::normal_distribution<float> n(0.0f, 3.0f);
  double worst = 0;
  double bias_abs = 0;
  for (int i = 0; i < 100; ++i) {
    Eigen::RowVectorXf c(cfg.context_dim);
    for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = n(rng);
    const auto w = generate_weight_values(net, c, true);
    for (std::size_t l = 0; l < w.weights.size(); ++l) {
      const Eigen::VectorXf norms = w.weights[l].rowwise().norm();
      worst = std::max(worst, static_cast<double>((norms.array() - 1.0f).abs().maxCoeff()));
      bias_abs = std::max(bias_abs, static_cast<double>(w.biases[l].cwiseAbs().maxCoeff()));
    }
  }
  return {3, "weight rows unit-norm", worst <= 1e-5,
          "100 contexts, max |norm - 1| = " + fmt("%.2e", worst) + ", max |bias| = " + fmt("%.3f", bias_abs)};
}

Verdict criterion4(Models& models) {
  const auto& m = models.get(DatasetKind::kBlobs);
  Rng rng(13);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto task = sample_task(m.source.dataset, m.source.split.test_classes, 5, 1, 15, rng);
    Rng ctx_rng(0);
    const auto base = infer_context(m.state.net, task.support_x, ctx_rng, true);
    for (int p = 0; p < 10; ++p) {
      std::vector<std::size_t> perm(task.support_y.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto permuted = permute_support(task, perm);
      const auto other = infer_context(m.state.net, permuted.support_x, ctx_rng, true);
      const double mu = (base.mu - other.mu).cwiseAbs().maxCoeff() / std::max(1e-30f, base.mu.cwiseAbs().maxCoeff());
      const double sigma =
          (base.sigma - other.sigma).cwiseAbs().maxCoeff() / std::max(1e-30f, base.sigma.cwiseAbs().maxCoeff());
      worst = std::max({worst, mu, sigma});
    }
  }
  return {4, "context order invariance", worst <= 1e-6,
          "50 tasks x 10 permutations, max relative difference " + fmt("%.2e", worst)};
}

Verdict criterion5(Models& models) {
  const auto& m = models.get(DatasetKind::kBlobs);
  Rng rng = derive_rng({m.state.config.seed, 7});
  std::vector<TaskInstance> tasks;
  std::set<std::vector<int>> seen;
  while (tasks.size() < 5) {
    auto t = sample_task(m.source.dataset, m.source.split.test_classes, 5, 1, 15, rng);
    auto key = t.class_ids;
    std::sort(key.begin(), key.end());
    if (seen.insert(key).second) tasks.push_back(std::move(t));
  }
  const auto dist = export_weight_distribution(m.state.net, tasks, 12, false, rng);
  const auto d = mean_pairwise_distances(dist.points, dist.task_ids);

  std::vector<TaskInstance> variants;
  for (int i = 0; i < 3; ++i) {
    std::vector<std::size_t> perm(tasks[0].support_y.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (i > 0) std::shuffle(perm.begin(), perm.end(), rng);
    variants.push_back(permute_support(tasks[0], perm));
  }
  const auto vdist = export_weight_distribution(m.state.net, variants, 12, false, rng);
  const double p = permutation_test(vdist.points, vdist.task_ids, 999, rng);
  return {5, "functional weight clusters", d.intra < d.inter && p >= 0.05,
          "intra " + fmt("%.4f", d.intra) + " < inter " + fmt("%.4f", d.inter) + "; permuted variants p = " +
              fmt("%.3f", p)};
}

Verdict criterion6(Models& models) {
  const auto& m = models.get(DatasetKind::kCircles);
  EvalOptions o;
  o.n_tasks = 100;
  o.n_way = 3;
  const auto seed = m.state.config.seed;

  Rng gen_rng = derive_rng({seed, 3});
  const auto gen = evaluate(m.state.net, m.source, o, gen_rng);

  Rng base_rng = derive_rng({seed, 5});
  EvalReport base;
  base.options = o;
  base.per_task =
      baseline_accuracies(m.source, o, m.state.config.model.target_widths, kBaselineSteps, kBaselineLr, base_rng);
  summarize(base);

  ModelConfig prior_cfg = m.state.config.model;
  prior_cfg.use_encoder = false;
  auto prior_init = derive_rng({seed, 1});
  Rng prior_rng = derive_rng({seed, 6});
  const auto prior = evaluate(init_metanet(prior_cfg, prior_init()), m.source, o, prior_rng);
  const double se = prior.stddev / std::sqrt(static_cast<double>(prior.n_tasks));
  const double chance = 1.0 / 3.0;

  const bool margin_ok = gen.mean_accuracy - base.mean_accuracy >= 0.10;
  const bool prior_ok = std::abs(prior.mean_accuracy - chance) <= 3.0 * se;
  return {6, "baseline comparison on circles", margin_ok && prior_ok,
          "generated " + fmt("%.4f", gen.mean_accuracy) + " vs direct-train " + fmt("%.4f", base.mean_accuracy) +
              (margin_ok ? " (margin ok)" : " (margin short)") + "; random prior " + fmt("%.4f", prior.mean_accuracy) +
              " vs chance " + fmt("%.4f", chance) + " +- 3se " + fmt("%.4f", 3.0 * se) +
              (prior_ok ? " (ok)" : " (outside)")};
}

Verdict criterion7() {
  const float a = lr_at(0), b = lr_at(1500), c = lr_at(3000);
  const bool ok = a == 1e-3f && b == 9e-4f && c == 8.1e-4f;
  return {7, "learning-rate schedule", ok,
          "lr(0)=" + fmt("%.9g", a) + " lr(1500)=" + fmt("%.9g", b) + " lr(3000)=" + fmt("%.9g", c)};
}

bool same_state(const TrainingState& a, const TrainingState& b) {
  return serialize_checkpoint(a) == serialize_checkpoint(b);
}

Verdict criterion8(const std::filesystem::path& work) {
  auto cfg = dataset_config(DatasetKind::kBlobs);
  cfg.total_batches = 1100;
  const auto source = make_task_source(cfg);

  auto logged_run = [&](std::int64_t until) {
    auto state = init_training(cfg);
    std::ostringstream log;
    write_log_header(log);
    train(state, source, until, [&](const StepStats& s) { write_log_row(log, s); });
    return std::make_pair(std::move(state), log.str());
  };
  auto [straight, log_a] = logged_run(1100);
  auto [again, log_b] = logged_run(1100);
  const bool logs_ok = log_a == log_b;

  auto first = init_training(cfg);
  train(first, source, 1000);
  const auto path = work / "criterion8.lgmn";
  save_checkpoint(first, path);
  auto resumed = load_checkpoint(path);
  std::filesystem::remove(path);
  train(resumed, source, 1100);
  const bool resume_ok = same_state(straight, resumed) && same_state(straight, again);
  return {8, "determinism and checkpoint resume", logs_ok && resume_ok,
          std::string("loss logs ") + (logs_ok ? "identical" : "differ") + "; resume at 1000 + 100 " +
              (resume_ok ? "bitwise equal" : "differs")};
}

Verdict criterion9(Models& models) {
  const auto& m = models.get(DatasetKind::kBlobs);
  const auto& net = m.state.net;
  const auto& cfg = net.config;
  const auto draw = draw_batch(m.state.config, m.source, 0);

  Matrix<float> stacked(0, cfg.input_dim);
  for (const auto& t : draw.tasks) {
    Matrix<float> grown(stacked.rows() + t.support_x.rows(), cfg.input_dim);
    grown << stacked, t.support_x;
    stacked = std::move(grown);
  }

  double worst_mean = 0, worst_var = 0;
  Tape<float> tape;
  const BoundParameters<float> params(tape, net.params);
  Tensor<float> h = tape.leaf(stacked);
  for (std::size_t i = 0; i < cfg.encoder_hidden.size(); ++i) {
    h = linear(h, params[encoder_weight_name(i)], params[encoder_bias_name(i)]);
    const auto w = static_cast<Eigen::Index>(cfg.encoder_hidden[i]);
    const auto normalized = batch_norm_train(h, tape.leaf(Matrix<float>(Matrix<float>::Ones(1, w))),
                                             tape.leaf(Matrix<float>(Matrix<float>::Zero(1, w))), kItnEps);
    const Eigen::MatrixXd x = normalized.value().cast<double>();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().mean();
    worst_mean = std::max(worst_mean, mean.cwiseAbs().maxCoeff());
    worst_var = std::max(worst_var, (var.array() - 1.0).abs().maxCoeff());
    h = relu(itn_forward(net.itn[i], h, params[itn_scale_name(i)], params[itn_shift_name(i)], ItnMode::kTraining));
  }

  const std::span<const TaskInstance> tasks(draw.tasks);
  const std::span<const Matrix<float>> noises(draw.noises);
  Tape<float> joint_tape;
  const BoundParameters<float> joint_params(joint_tape, net.params);
  const auto joint = batch_forward(joint_tape, net, joint_params, tasks, noises, ItnMode::kInference);
  bool isolated = true;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Tape<float> t;
    const BoundParameters<float> p(t, net.params);
    const auto alone = batch_forward(t, net, p, tasks.subspan(i, 1), noises.subspan(i, 1), ItnMode::kInference);
    isolated = isolated && alone.probabilities[0].value() == joint.probabilities[i].value();
  }
  const bool ok = worst_mean < 1e-5 && worst_var <= 1e-4 && isolated;
  return {9, "intertask normalization", ok,
          "pooled " + std::to_string(stacked.rows()) + " rows: max |mean| " + fmt("%.2e", worst_mean) +
              ", max |var - 1| " + fmt("%.2e", worst_var) + "; inference alone vs joint " +
              (isolated ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lgmnet acceptance run"};
  std::vector<int> only;
  std::int64_t batches = 20000;
  std::string work = std::filesystem::temp_directory_path().string();
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 9));
  app.add_option("--batches", batches, "training batches per model")->check(CLI::PositiveNumber);
  app.add_option("--work-dir", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  Models models(batches);
  std::vector<Verdict> verdicts;
  auto run = [&](int id, auto fn) {
    if (!wanted(id)) return;
    try {
      verdicts.push_back(fn());
    } catch (const std::exception& e) {
      verdicts.push_back({id, "criterion " + std::to_string(id), false, std::string("error: ") + e.what()});
    }
    const auto& v = verdicts.back();
    std::cout << (v.passed ? "PASS" : "FAIL") << "  [" << v.id << "] " << v.title << ": " << v.detail << std::endl;
  };
  run(1, [&] { return criterion1(models); });
  run(2, [] { return criterion2(); });
  run(3, [] { return criterion3(); });
  run(4, [&] { return criterion4(models); });
  run(5, [&] { return criterion5(models); });
  run(6, [&] { return criterion6(models); });
  run(7, [] { return criterion7(); });
  run(8, [&] { return criterion8(work); });
  run(9, [&] { return criterion9(models); });

  const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
  std::cout << passed << "/" << verdicts.size() << " criteria passed" << std::endl;
  return passed == static_cast<long>(verdicts.size()) ? 0 : 1;
}
