#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dilhyfs/config.hpp"
#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/data/manifest.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/model/train.hpp"
#include "dilhyfs/protocol/metrics.hpp"
#include "dilhyfs/protocol/stream.hpp"
#include "dilhyfs/prototype.hpp"

namespace dilhyfs::protocol {

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  model::BranchMode mode = model::BranchMode::dual;
  std::vector<double> per_task_accuracy;
  double avg_inc_accuracy = 0.0;
  double performance_drop = 0.0;
  double lambda = 0.0;
  std::string config_hash;
  std::string stream_hash;
  std::vector<std::size_t> task_train_sizes;
  std::vector<std::size_t> task_test_sizes;
};

/// Fills the derived metrics from per_task_accuracy.
inline void finalize_report(RunReport& r) {
  r.avg_inc_accuracy = average_incremental_accuracy(r.per_task_accuracy);
  r.performance_drop = performance_drop(r.per_task_accuracy);
}

/// Observer for progress lines: (seed, message).
using ProgressFn = std::function<void(std::uint64_t, const std::string&)>;

/// Child-stream indices of a seed's root Rng.
enum RngSlot : std::uint64_t { kStreamRng = 0, kModelRng = 1, kTrainRng = 2, kProjectionRng = 3, kLambdaRng = 4 };

/// Loads or generates every configured source once; the result is shared by all seeds.
inline std::vector<data::Dataset> load_sources(const ExperimentConfig& cfg) {
  std::vector<data::Dataset> out;
  for (const auto& src : cfg.sources) {
    if (src.synthetic) {
      Rng rng(src.data_seed);
      out.push_back(data::gen_dataset(*src.synthetic, rng, src.domain).dataset);
    } else {
      out.push_back(data::load_manifest(*src.manifest, cfg.model.input_size, src.domain));
    }
  }
  return out;
}

/// The stream for one seed: each source's scenario applied with its own child Rng, composed
/// in configuration order.
inline TaskStream build_experiment_stream(const ExperimentConfig& cfg, const std::vector<data::Dataset>& sources,
                                          std::uint64_t seed) {
  const Rng root = Rng(seed).split(kStreamRng);
  std::vector<TaskStream> streams;
  for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
    Rng rng = root.split(i);
    streams.push_back(build_stream(sources.at(i), cfg.sources[i].scenario, rng));
  }
  TaskStream stream = streams.size() == 1 ? std::move(streams.front()) : compose_cross_domain(streams);
  const auto problems = check_stream(stream);
  if (!problems.empty()) throw DataError("stream invariant violated: " + problems.front());
  return stream;
}

inline std::vector<Tensor> gather_images(const TaskStream& s, const std::vector<std::size_t>& rows) {
  std::vector<Tensor> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(s.samples[i].image);
  return out;
}

inline std::vector<std::size_t> gather_labels(const TaskStream& s, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(s.samples[i].label);
  return out;
}

/// Closed-form stage of the pipeline for a trained, frozen model in the given branch mode:
/// project and ingest the base task, pick lambda, then ingest each later task and evaluate
/// after every task on the joint test pool of all classes seen so far.
inline RunReport evaluate_stream(model::DualBranchModel& net, const TaskStream& stream,
                                 const prototype::PrototypeConfig& pcfg, std::uint64_t seed,
                                 model::BranchMode mode) {
  net.set_mode(mode);
  RunReport report;
  report.seed = seed;
  report.mode = mode;
  const Rng root(seed);

  // Features of every sample, computed once (the network is frozen).
  std::vector<std::optional<Tensor>> cache(stream.samples.size());
  auto features_of = [&](const std::vector<std::size_t>& rows) {
    Tensor f({rows.size(), net.feature_dim()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto& slot = cache[rows[r]];
      if (!slot) slot = net.forward_features(stream.samples[rows[r]].image);
      std::copy(slot->values().begin(), slot->values().end(), f.row(r).begin());
    }
    return f;
  };

  auto state = prototype::init_projection(root.split(kProjectionRng).next_u64(), net.feature_dim(),
                                          pcfg.projection_dim, pcfg);
  for (const auto& task : stream.tasks) {
    const Tensor h = prototype::embed(state, features_of(task.train));
    const auto labels = gather_labels(stream, task.train);
    if (task.kind == TaskKind::base) {
      Rng lambda_rng = root.split(kLambdaRng);
      prototype::select_lambda(state, h, labels, lambda_rng, pcfg);
    }
    prototype::ingest_task(state, h, labels);
    const Tensor p = prototype::compute_prototypes(state);
    const auto predicted = prototype::predict(state, p, prototype::embed(state, features_of(task.test)));
    report.per_task_accuracy.push_back(accuracy(predicted, gather_labels(stream, task.test)));
    report.task_train_sizes.push_back(task.train.size());
    report.task_test_sizes.push_back(task.test.size());
  }
  report.lambda = state.lambda.value_or(0.0);
  report.stream_hash = stream.hash();
  finalize_report(report);
  net.set_mode(model::BranchMode::dual);
  return report;
}

/// Full pipeline for one seed: train on the base task, freeze the network, then run the
/// closed-form stage once per requested branch mode on the same trained weights.
inline std::vector<RunReport> run_fscil(const ExperimentConfig& cfg, const TaskStream& stream, std::uint64_t seed,
                                        const std::vector<model::BranchMode>& modes,
                                        const ProgressFn& progress = {}) {
  if (stream.tasks.empty() || stream.tasks.front().kind != TaskKind::base) {
    throw DataError("run_fscil: stream must start with a base task");
  }
  const Rng root(seed);
  Rng model_rng = root.split(kModelRng);
  model::DualBranchModel net(cfg.model, model_rng);
  const auto& base = stream.tasks.front();
  const auto images = gather_images(stream, base.train);
  const auto labels = gather_labels(stream, base.train);
  Rng train_rng = root.split(kTrainRng);
  model::EpochCallback on_epoch;
  if (progress) {
    on_epoch = [&](char phase, std::size_t epoch, const model::EpochStats& s) {
      progress(seed, std::string("phase ") + phase + " epoch " + std::to_string(epoch + 1) + " loss " +
                         std::to_string(s.loss) + " acc " + std::to_string(s.accuracy));
    };
  }
  model::train_base(net, images, labels, base.classes.size(), cfg.train, train_rng, on_epoch);
  net.set_all_trainable(false);

  const std::string hash = config_hash(cfg);
  const std::string scenario(scenario_name(cfg.sources.front().scenario.scenario));
  std::vector<RunReport> out;
  for (auto mode : modes) {
    RunReport r = evaluate_stream(net, stream, cfg.prototype, seed, mode);
    r.scenario = scenario;
    r.config_hash = hash;
    out.push_back(std::move(r));
  }
  return out;
}

/// Worker count: DILHYFS_THREADS when set to a positive integer, otherwise the hardware
/// concurrency; never more than the number of jobs.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DILHYFS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

struct ModeSummary {
  model::BranchMode mode = model::BranchMode::dual;
  std::vector<double> mean_per_task_accuracy;
  double avg_inc_accuracy = 0.0;
  double performance_drop = 0.0;
};

struct AggregateReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RunReport> runs;  // seed-major, then mode in request order
  std::vector<ModeSummary> summaries;
};

/// Arithmetic means over seeds, per mode, of every metric.
inline std::vector<ModeSummary> summarize(const std::vector<RunReport>& runs,
                                          const std::vector<model::BranchMode>& modes) {
  std::vector<ModeSummary> out;
  for (auto mode : modes) {
    ModeSummary s;
    s.mode = mode;
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (r.mode != mode) continue;
      if (s.mean_per_task_accuracy.empty()) s.mean_per_task_accuracy.assign(r.per_task_accuracy.size(), 0.0);
      if (r.per_task_accuracy.size() != s.mean_per_task_accuracy.size()) {
        throw DimensionError("summarize: runs disagree on the number of tasks");
      }
      for (std::size_t t = 0; t < r.per_task_accuracy.size(); ++t) s.mean_per_task_accuracy[t] += r.per_task_accuracy[t];
      s.avg_inc_accuracy += r.avg_inc_accuracy;
      s.performance_drop += r.performance_drop;
      ++n;
    }
    if (n == 0) continue;
    const double inv = 1.0 / static_cast<double>(n);
    for (double& a : s.mean_per_task_accuracy) a *= inv;
    s.avg_inc_accuracy *= inv;
    s.performance_drop *= inv;
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

[[noreturn]] inline void rethrow_for_seed(std::exception_ptr e, std::uint64_t seed) {
  const std::string prefix = "seed " + std::to_string(seed) + ": ";
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError& x) {
    throw ConfigError(prefix + x.what());
  } catch (const DataError& x) {
    throw DataError(prefix + x.what());
  } catch (const NumericError& x) {
    throw NumericError(prefix + x.what());
  } catch (const std::exception& x) {
    throw Error(prefix + x.what());
  }
}

}  // namespace detail

/// Runs every seed (in parallel up to worker_count) and aggregates. Results are stored by
/// seed position, so the output does not depend on scheduling. The first failing seed in
/// list order aborts the aggregate and is named in the error.
inline AggregateReport repeat_with_seeds(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                         const std::vector<model::BranchMode>& modes,
                                         const ProgressFn& progress = {}) {
  cfg.validate();
  if (seeds.empty()) throw ConfigError("repeat_with_seeds: no seeds");
  const auto sources = load_sources(cfg);
  std::vector<std::vector<RunReport>> per_seed(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        const TaskStream stream = build_experiment_stream(cfg, sources, seeds[i]);
        per_seed[i] = run_fscil(cfg, stream, seeds[i], modes, progress);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = worker_count(seeds.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (errors[i]) detail::rethrow_for_seed(errors[i], seeds[i]);
  }
  AggregateReport agg;
  agg.seeds = seeds;
  for (auto& runs : per_seed) {
    for (auto& r : runs) agg.runs.push_back(std::move(r));
  }
  agg.summaries = summarize(agg.runs, modes);
  return agg;
}

}  // namespace dilhyfs::protocol
