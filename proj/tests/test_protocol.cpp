#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "dilhyfs/config.hpp"
#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/protocol/metrics.hpp"
#include "dilhyfs/protocol/report.hpp"
#include "dilhyfs/protocol/runner.hpp"
#include "dilhyfs/protocol/stream.hpp"

using namespace dilhyfs;
using namespace dilhyfs::protocol;

namespace {

data::Dataset small_dataset(std::size_t classes, std::uint64_t seed, const std::string& domain = "synthetic") {
  data::GenConfig g;
  g.num_classes = classes;
  g.per_class = 12;
  g.size = 16;
  Rng rng(seed);
  return data::gen_dataset(g, rng, domain).dataset;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.model.input_size = 16;
  c.model.stage_dims = {4, 6, 8, 8};
  c.model.spatial_blocks = {1, 1, 1, 1};
  c.model.spectral_blocks = {1, 1, 1, 1};
  c.train.sgd.batch_size = 8;
  c.train.sgd.pretrain_epochs = 1;
  c.train.sgd.epochs = 1;
  c.prototype.projection_dim = 64;
  auto& s = c.sources.front();
  s.synthetic->num_classes = 5;
  s.synthetic->per_class = 10;
  s.synthetic->size = 16;
  s.scenario.base_classes = 2;
  s.scenario.total_classes = 5;
  s.scenario.n_way = 1;
  s.scenario.k_shot = 2;
  c.seeds = {1, 2};
  return c;
}

}  // namespace

TEST(Metrics, PublishedSingleDomainRow) {
  const std::vector<double> row{94.54, 80.21, 84.10, 85.08, 78.98, 81.93, 83.60};
  // Hand sum: 94.54 + 80.21 + 84.10 + 85.08 + 78.98 + 81.93 + 83.60 = 588.44; / 7 = 84.0628...
  EXPECT_NEAR(average_incremental_accuracy(row), 84.06, 0.005);
  EXPECT_NEAR(performance_drop(row), 10.94, 0.001);
}

TEST(Metrics, PublishedCrossDomainRow) {
  const std::vector<double> row{90.54, 88.65};
  EXPECT_NEAR(average_incremental_accuracy(row), 89.595, 0.005);
  EXPECT_NEAR(performance_drop(row), 1.89, 0.001);
}

TEST(Metrics, EdgeCasesAndAccuracy) {
  const std::vector<double> one{0.7};
  EXPECT_EQ(average_incremental_accuracy(one), 0.7);
  EXPECT_EQ(performance_drop(one), 0.0);
  EXPECT_THROW(average_incremental_accuracy(std::vector<double>{}), DimensionError);
  const std::vector<std::size_t> pred{1, 2, 3, 4}, truth{1, 0, 3, 0};
  EXPECT_EQ(accuracy(pred, truth), 0.5);
  EXPECT_THROW(accuracy(pred, std::vector<std::size_t>{1}), DimensionError);
}

TEST(Scenario, TaskCountsAndValidation) {
  ScenarioConfig s;
  EXPECT_EQ(s.task_class_counts(), (std::vector<std::size_t>{4, 1, 1, 1, 1, 1, 1}));
  s.scenario = Scenario::one_step_k_shot;
  EXPECT_EQ(s.task_class_counts(), (std::vector<std::size_t>{4, 6}));
  s.scenario = Scenario::n_way_k_shot;
  s.n_way = 4;
  EXPECT_THROW(s.validate(), ConfigError);
  s.n_way = 2;
  EXPECT_EQ(s.num_tasks(), 4u);
  s.class_order = std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 8};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Stream, OneWayFiveShotInvariants) {
  const auto ds = small_dataset(10, 3);
  ScenarioConfig s;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto stream = build_stream(ds, s, rng);
    ASSERT_EQ(stream.tasks.size(), 7u);
    EXPECT_TRUE(check_stream(stream).empty());
    EXPECT_EQ(stream.tasks[0].kind, TaskKind::base);
    // Base task: every training sample of 4 classes; 12 per class, 8 of them for training.
    EXPECT_EQ(stream.tasks[0].train.size(), 4u * 8u);
    std::set<std::size_t> sources;
    for (const auto& task : stream.tasks) {
      if (task.kind == TaskKind::incremental) {
        EXPECT_EQ(task.train.size(), 5u);
      }
      for (std::size_t i : task.train) sources.insert(stream.samples[i].source_class);
    }
    EXPECT_EQ(sources.size(), 10u);
    // The test pool grows by one class (4 test samples) per task.
    for (std::size_t t = 1; t < 7; ++t) EXPECT_EQ(stream.tasks[t].test.size(), stream.tasks[t - 1].test.size() + 4);
  }
}

TEST(Stream, SeededAndExplicitOrder) {
  const auto ds = small_dataset(6, 4);
  ScenarioConfig s;
  s.base_classes = 2;
  s.total_classes = 6;
  Rng a(5), b(5), c(6);
  EXPECT_EQ(build_stream(ds, s, a).hash(), build_stream(ds, s, b).hash());
  EXPECT_NE(build_stream(ds, s, a).hash(), build_stream(ds, s, c).hash());
  s.class_order = std::vector<std::size_t>{5, 4, 3, 2, 1, 0};
  Rng r(1);
  const auto stream = build_stream(ds, s, r);
  EXPECT_EQ(stream.samples[stream.tasks[1].train.front()].source_class, 3u);
  s.total_classes = 7;
  s.class_order.reset();
  EXPECT_THROW(build_stream(ds, s, r), DataError);
}

TEST(Stream, ViolationsAreReported) {
  const auto ds = small_dataset(6, 4);
  ScenarioConfig s;
  s.base_classes = 2;
  s.total_classes = 6;
  Rng rng(1);
  auto stream = build_stream(ds, s, rng);
  auto broken = stream;
  broken.tasks[2].train.push_back(broken.tasks[0].train.front());
  EXPECT_FALSE(check_stream(broken).empty());
  broken = stream;
  broken.tasks[3].test = broken.tasks[1].test;
  EXPECT_FALSE(check_stream(broken).empty());
}

TEST(CrossDomain, ComposeRemapsLabelsAndKeepsInvariants) {
  const auto a = small_dataset(5, 1, "alpha");
  const auto b = small_dataset(4, 2, "beta");
  ScenarioConfig sa;
  sa.base_classes = 3;
  sa.total_classes = 5;
  ScenarioConfig sb;
  sb.base_classes = 0;
  sb.total_classes = 4;
  sb.scenario = Scenario::one_step_k_shot;
  Rng ra(1), rb(2);
  const auto first = build_stream(a, sa, ra);
  const auto second = build_stream(b, sb, rb);
  const auto joined = compose_cross_domain({first, second});
  EXPECT_TRUE(check_stream(joined).empty());
  ASSERT_EQ(joined.tasks.size(), first.tasks.size() + 1);
  EXPECT_EQ(joined.num_classes(), 9u);
  EXPECT_EQ(joined.tasks.back().classes, (std::vector<std::size_t>{5, 6, 7, 8}));
  for (std::size_t i : joined.tasks.back().train) EXPECT_EQ(joined.samples[i].domain, "beta");
  // Four test samples per class, nine classes seen by the end.
  EXPECT_EQ(joined.tasks.back().test.size(), 36u);
  EXPECT_THROW(compose_cross_domain({first, first}), CompositionError);
  EXPECT_THROW(compose_cross_domain({}), CompositionError);
}

TEST(Runner, EndToEndIsDeterministicAndShapedLikeTheStream) {
  const ExperimentConfig cfg = tiny_experiment();
  const auto a = repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual});
  const auto b = repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual});
  EXPECT_EQ(results_json(cfg, a), results_json(cfg, b));
  EXPECT_EQ(results_csv(a), results_csv(b));
  ASSERT_EQ(a.runs.size(), 2u);
  for (const auto& r : a.runs) {
    ASSERT_EQ(r.per_task_accuracy.size(), 4u);
    for (double acc : r.per_task_accuracy) {
      EXPECT_GE(acc, 0.0);
      EXPECT_LE(acc, 1.0);
    }
    EXPECT_NEAR(r.avg_inc_accuracy, average_incremental_accuracy(r.per_task_accuracy), 1e-15);
    EXPECT_EQ(r.performance_drop, r.per_task_accuracy.front() - r.per_task_accuracy.back());
    const auto grid = cfg.prototype.lambda_grid();
    EXPECT_NE(std::find(grid.begin(), grid.end(), r.lambda), grid.end());
    EXPECT_EQ(r.task_train_sizes, (std::vector<std::size_t>{14, 2, 2, 2}));
  }
  EXPECT_NE(a.runs[0].stream_hash, a.runs[1].stream_hash);
  const auto& s = a.summaries.front();
  EXPECT_NEAR(s.avg_inc_accuracy, 0.5 * (a.runs[0].avg_inc_accuracy + a.runs[1].avg_inc_accuracy), 1e-15);
}

TEST(Runner, ThreadCountDoesNotChangeResults) {
  const ExperimentConfig cfg = tiny_experiment();
  ::setenv("DILHYFS_THREADS", "1", 1);
  const auto serial = results_json(cfg, repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual}));
  ::setenv("DILHYFS_THREADS", "2", 1);
  EXPECT_EQ(worker_count(5), 2u);
  const auto parallel = results_json(cfg, repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual}));
  ::unsetenv("DILHYFS_THREADS");
  EXPECT_EQ(serial, parallel);
}

TEST(Runner, BranchModesShareOneStreamAndDualMatchesAPlainRun) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.seeds = {3};
  const auto ablation = repeat_with_seeds(
      cfg, cfg.seeds, {model::BranchMode::spatial_only, model::BranchMode::spectral_only, model::BranchMode::dual});
  ASSERT_EQ(ablation.runs.size(), 3u);
  for (const auto& r : ablation.runs) {
    EXPECT_EQ(r.stream_hash, ablation.runs.front().stream_hash);
    EXPECT_EQ(r.config_hash, ablation.runs.front().config_hash);
  }
  const auto plain = repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual});
  EXPECT_EQ(plain.runs.front().per_task_accuracy, ablation.runs.back().per_task_accuracy);
}

TEST(Config, ParsesRoundTripsAndRejectsUnknownKeys) {
  const ExperimentConfig cfg = tiny_experiment();
  const ExperimentConfig back = parse_config_text(resolved_config(cfg).dump());
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_THROW(parse_config_text("{\"model\": {\"depth\": 3}}"), ConfigError);
  EXPECT_THROW(parse_config_text("{\"train\": {\"learning_rate\": \"fast\"}}"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  ExperimentConfig changed = cfg;
  changed.train.sgd.learning_rate *= 2;
  EXPECT_NE(config_hash(changed), config_hash(cfg));
}
