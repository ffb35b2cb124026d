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
#include "lgmnet/gradcheck.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

namespace {

using namespace lgmnet;

struct Options {
  std::string dataset = "blobs";
  int n_way = 5;
  int k_shot = 1;
  int n_query = 15;
  int tasks = 500;
  std::int64_t batches = 20000;
  int tasks_per_batch = 16;
  std::uint64_t seed = 7;
  std::string model;
  std::string out;
  std::string log;
  std::string mode = "plain";
  int ensemble_size = 10;
  bool no_itn = false;
  bool no_wn = false;
  bool no_tce = false;
  bool deterministic = false;
  int grid_resolution = kDefaultGridResolution;
  std::string bbox = "-1.2,1.2,-1.2,1.2";
  std::string weights = "generated";
  int samples = 12;
  int steps = kBaselineSteps;
  float lr = kBaselineLr;
  bool per_task = false;
  bool permuted = false;
  std::string split = "test";
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return f;
}

/// Either a trained model or, with --no-tce and no --model, an untrained
/// generator driven by N(0, I) contexts.
struct Loaded {
  TrainConfig config;
  MetaNet net;
};

Loaded load_model(const Options& o) {
  if (!o.model.empty()) {
    auto state = load_checkpoint(o.model);
    return {state.config, std::move(state.net)};
  }
  if (!o.no_tce) throw std::runtime_error("--model is required (or pass --no-tce for random-prior weights)");
  TrainConfig cfg;
  cfg.dataset = parse_dataset_kind(o.dataset);
  cfg.seed = o.seed;
  cfg.model.use_encoder = false;
  cfg.model.weight_norm = !o.no_wn;
  auto init_rng = derive_rng({o.seed, 1});
  auto net = init_metanet(cfg.model, init_rng());
  return {cfg, std::move(net)};
}

EvalOptions eval_options(const Options& o, const CLI::App& app, const TrainConfig& trained) {
  EvalOptions e;
  e.side = o.split == "train" ? SplitSide::kTrain : SplitSide::kTest;
  e.n_tasks = o.tasks;
  e.n_way = app.count("--n-way") ? o.n_way : trained.n_way;
  e.k_shot = app.count("--k-shot") ? o.k_shot : trained.k_shot;
  e.n_query = app.count("--n-query") ? o.n_query : trained.n_query;
  e.mode = parse_eval_mode(o.mode);
  e.ensemble_size = o.ensemble_size;
  return e;
}

int run_train(const Options& o) {
  TrainingState state;
  if (!o.model.empty()) {
    state = load_checkpoint(o.model);
    state.config.total_batches = o.batches;
  } else {
    TrainConfig cfg;
    cfg.dataset = parse_dataset_kind(o.dataset);
    cfg.n_way = o.n_way;
    cfg.k_shot = o.k_shot;
    cfg.n_query = o.n_query;
    cfg.tasks_per_batch = o.tasks_per_batch;
    cfg.total_batches = o.batches;
    cfg.seed = o.seed;
    cfg.model.use_itn = !o.no_itn;
    cfg.model.weight_norm = !o.no_wn;
    cfg.model.use_encoder = !o.no_tce;
    cfg.model.deterministic_context = o.deterministic;
    state = init_training(cfg);
  }
  const std::string out = o.out.empty() ? "model.lgmn" : o.out;
  const std::string log_path = o.log.empty() ? out + ".log.csv" : o.log;
  auto log = open_out(log_path);
  write_log_header(log);
  const auto source = make_task_source(state.config);
  train(state, source, state.config.total_batches, [&](const StepStats& s) {
    write_log_row(log, s);
    if ((s.batch + 1) % 1000 == 0) {
      std::cerr << "batch " << s.batch + 1 << " loss " << s.mean_loss << " acc " << s.mean_accuracy << '\n';
    }
  });
  save_checkpoint(state, out);
  std::cout << "wrote " << out << " (" << state.batch << " batches), log " << log_path << '\n';
  return 0;
}

int run_eval(const Options& o, const CLI::App& app) {
  const auto m = load_model(o);
  const auto opts = eval_options(o, app, m.config);
  const auto source = make_task_source(m.config);
  Rng rng = derive_rng({o.seed, 3});
  const auto report = evaluate(m.net, source, opts, rng);
  std::cout << report_json(report, o.per_task) << '\n';
  return 0;
}

int run_boundary(const Options& o, const CLI::App& app) {
  const auto m = load_model(o);
  const auto opts = eval_options(o, app, m.config);
  const auto source = make_task_source(m.config);
  Rng rng = derive_rng({o.seed, 4});
  const auto task = sample_task(source.dataset, classes_on(source.split, opts.side), opts.n_way, opts.k_shot,
                                opts.n_query, rng);
  PointClassifier classifier;
  double query_acc = 0.0;
  if (o.weights == "direct") {
    const auto base = direct_train_baseline(task, m.config.model.target_widths, o.steps, o.lr, rng);
    classifier = [model = base.model](const Matrix<float>& pts) { return model.predict(pts); };
    query_acc = base.query_accuracy;
  } else if (o.weights == "generated" || o.weights == "random-prior") {
    WeightValues w;
    if (o.weights == "random-prior") {
      w = random_prior_weights(m.net, rng, m.net.config.weight_norm);
    } else {
      const auto mode = parse_eval_mode(o.mode) == EvalMode::kDeterministic ? EvalMode::kDeterministic : EvalMode::kPlain;
      w = task_weights(m.net, task.support_x, mode, 1, rng).front();
    }
    classifier = matching_classifier(w, task);
    query_acc = accuracy(classifier(task.query_x), task.query_y);
  } else {
    throw CLI::ValidationError("--weights", "expected generated, random-prior or direct");
  }
  const auto grid = export_boundary(classifier, o.grid_resolution, parse_bbox(o.bbox));
  const std::string prefix = o.out.empty() ? "boundary" : o.out;
  auto grid_csv = open_out(prefix + "_grid.csv");
  write_boundary_csv(grid, grid_csv);
  auto points_csv = open_out(prefix + "_points.csv");
  write_points_csv(task, points_csv);
  nlohmann::ordered_json j;
  j["weights"] = o.weights;
  j["grid_csv"] = prefix + "_grid.csv";
  j["points_csv"] = prefix + "_points.csv";
  j["cells"] = grid.labels.size();
  j["query_accuracy"] = query_acc;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_baseline(const Options& o, const CLI::App& app) {
  TrainConfig cfg;
  std::optional<Loaded> m;
  if (!o.model.empty()) {
    m = load_model(o);
    cfg = m->config;
  } else {
    cfg.dataset = parse_dataset_kind(o.dataset);
    cfg.seed = o.seed;
    cfg.n_way = o.n_way;
    cfg.k_shot = o.k_shot;
    cfg.n_query = o.n_query;
  }
  auto opts = eval_options(o, app, cfg);
  if (!app.count("--tasks")) opts.n_tasks = 100;
  const auto source = make_task_source(cfg);
  nlohmann::ordered_json j;
  j["dataset"] = to_string(cfg.dataset);
  j["tasks"] = opts.n_tasks;
  j["n_way"] = opts.n_way;
  j["k_shot"] = opts.k_shot;

  Rng base_rng = derive_rng({o.seed, 5});
  EvalReport base;
  base.options = opts;
  base.per_task = baseline_accuracies(source, opts, cfg.model.target_widths, o.steps, o.lr, base_rng);
  summarize(base);
  j["direct_train"] = {{"mean_accuracy", base.mean_accuracy}, {"ci95", base.ci95}};

  Rng prior_rng = derive_rng({o.seed, 6});
  TrainConfig prior_cfg = cfg;
  prior_cfg.model.use_encoder = false;
  auto prior_init = derive_rng({o.seed, 1});
  const auto prior = evaluate(init_metanet(prior_cfg.model, prior_init()), source, opts, prior_rng);
  j["random_prior"] = {{"mean_accuracy", prior.mean_accuracy}, {"ci95", prior.ci95}};

  if (m) {
    Rng rng = derive_rng({o.seed, 3});
    const auto gen = evaluate(m->net, source, opts, rng);
    j["generated"] = {{"mean_accuracy", gen.mean_accuracy}, {"ci95", gen.ci95}};
  }
  j["chance"] = 1.0 / opts.n_way;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_weights_viz(const Options& o, const CLI::App& app) {
  const auto m = load_model(o);
  const auto opts = eval_options(o, app, m.config);
  const auto source = make_task_source(m.config);
  Rng rng = derive_rng({o.seed, 7});
  const int n_tasks = app.count("--tasks") ? o.tasks : 5;
  std::vector<TaskInstance> tasks;
  if (o.permuted) {
    const auto task = sample_task(source.dataset, classes_on(source.split, opts.side), opts.n_way, opts.k_shot,
                                  opts.n_query, rng);
    for (int i = 0; i < n_tasks; ++i) {
      std::vector<std::size_t> perm(task.support_y.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      if (i > 0) std::shuffle(perm.begin(), perm.end(), rng);
      tasks.push_back(permute_support(task, perm));
    }
  } else {
    for (int i = 0; i < n_tasks; ++i) {
      tasks.push_back(sample_task(source.dataset, classes_on(source.split, opts.side), opts.n_way, opts.k_shot,
                                  opts.n_query, rng));
    }
  }
  const bool deterministic = parse_eval_mode(o.mode) == EvalMode::kDeterministic;
  const auto dist = export_weight_distribution(m.net, tasks, o.samples, deterministic, rng);
  const std::string prefix = o.out.empty() ? "weights" : o.out;
  auto raw = open_out(prefix + "_raw.csv");
  write_weights_csv(dist, raw);
  auto pca = open_out(prefix + "_pca.csv");
  write_projection_csv(dist, pca);
  const auto d = mean_pairwise_distances(dist.points, dist.task_ids);
  nlohmann::ordered_json j;
  j["rows"] = dist.points.rows();
  j["dims"] = dist.points.cols();
  j["mean_intra_distance"] = d.intra;
  j["mean_inter_distance"] = d.inter;
  j["permutation_p_value"] = permutation_test(dist.points, dist.task_ids, 999, rng);
  j["raw_csv"] = prefix + "_raw.csv";
  j["pca_csv"] = prefix + "_pca.csv";
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_gradcheck(const Options& o, const CLI::App& app) {
  const int seeds = app.count("--tasks") ? o.tasks : 1;
  bool ok = true;
  for (int s = 0; s < seeds; ++s) {
    for (const auto& r : run_gradchecks(o.seed + static_cast<std::uint64_t>(s))) {
      std::cout << (r.passed() ? "ok   " : "FAIL ") << r.name << " seed " << o.seed + s << " max_rel_error "
                << r.max_error << " checked " << r.checked << " skipped " << r.skipped << '\n';
      ok = ok && r.passed();
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot meta-learning with generated matching-network weights"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "blobs|lines|spirals|circles")
        ->check(CLI::IsMember({"blobs", "lines", "spirals", "circles"}));
    sub->add_option("--n-way", o.n_way)->check(CLI::PositiveNumber);
    sub->add_option("--k-shot", o.k_shot)->check(CLI::PositiveNumber);
    sub->add_option("--n-query", o.n_query)->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed);
    sub->add_option("--model", o.model, "checkpoint file");
    sub->add_option("--out", o.out, "output file or prefix");
    sub->add_flag("--no-tce", o.no_tce, "no task context encoder: contexts from N(0, I)");
    sub->add_flag("--no-wn", o.no_wn, "disable weight normalization");
    sub->add_option("--split", o.split, "meta split side")->check(CLI::IsMember({"test", "train"}));
  };

  auto* train = app.add_subcommand("train", "meta-train a model and write a checkpoint");
  common(train);
  train->add_option("--batches", o.batches)->check(CLI::NonNegativeNumber);
  train->add_option("--tasks-per-batch", o.tasks_per_batch)->check(CLI::PositiveNumber);
  train->add_option("--log", o.log, "training log CSV (default <out>.log.csv)");
  train->add_flag("--no-itn", o.no_itn, "disable intertask normalization");
  train->add_flag("--deterministic-context", o.deterministic, "c = mu during training");

  auto* eval = app.add_subcommand("eval", "evaluate on unseen tasks");
  common(eval);
  eval->add_option("--tasks", o.tasks)->check(CLI::PositiveNumber);
  eval->add_option("--mode", o.mode)->check(CLI::IsMember({"plain", "deterministic", "ensemble"}));
  eval->add_option("--ensemble-size", o.ensemble_size)->check(CLI::PositiveNumber);
  eval->add_flag("--per-task", o.per_task, "include per-task accuracies");

  auto* boundary = app.add_subcommand("boundary", "export a decision-boundary grid for one task");
  common(boundary);
  boundary->add_option("--grid-resolution", o.grid_resolution)->check(CLI::PositiveNumber);
  boundary->add_option("--bbox", o.bbox, "xmin,xmax,ymin,ymax");
  boundary->add_option("--mode", o.mode)->check(CLI::IsMember({"plain", "deterministic"}));
  boundary->add_option("--weights", o.weights, "generated|random-prior|direct")
      ->check(CLI::IsMember({"generated", "random-prior", "direct"}));
  boundary->add_option("--steps", o.steps)->check(CLI::NonNegativeNumber);
  boundary->add_option("--lr", o.lr);

  auto* baseline = app.add_subcommand("baseline", "direct training and random prior against generated weights");
  common(baseline);
  baseline->add_option("--tasks", o.tasks)->check(CLI::PositiveNumber);
  baseline->add_option("--steps", o.steps)->check(CLI::NonNegativeNumber);
  baseline->add_option("--lr", o.lr);

  auto* wviz = app.add_subcommand("weights-viz", "export sampled weight vectors and their PCA projection");
  common(wviz);
  wviz->add_option("--tasks", o.tasks)->check(CLI::PositiveNumber);
  wviz->add_option("--samples", o.samples, "weight samples per task")->check(CLI::PositiveNumber);
  wviz->add_option("--mode", o.mode)->check(CLI::IsMember({"plain", "deterministic"}));
  wviz->add_flag("--permuted", o.permuted, "use order-permuted copies of one task");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--seed", o.seed);
  grad->add_option("--tasks", o.tasks, "number of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_train(o);
    if (*eval) return run_eval(o, *eval);
    if (*boundary) return run_boundary(o, *boundary);
    if (*baseline) return run_baseline(o, *baseline);
    if (*wviz) return run_weights_viz(o, *wviz);
    if (*grad) return run_gradcheck(o, *grad);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
