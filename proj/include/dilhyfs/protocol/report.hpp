#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilhyfs/config.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/protocol/runner.hpp"
#include "dilhyfs/util/hash.hpp"

namespace dilhyfs::protocol {

inline nlohmann::json report_json(const RunReport& r) {
  return {{"scenario", r.scenario},
          {"seed", r.seed},
          {"mode", std::string(model::branch_mode_name(r.mode))},
          {"per_task_accuracy", r.per_task_accuracy},
          {"avg_inc_accuracy", r.avg_inc_accuracy},
          {"performance_drop", r.performance_drop},
          {"lambda", r.lambda},
          {"config_hash", r.config_hash},
          {"stream_hash", r.stream_hash},
          {"task_train_sizes", r.task_train_sizes},
          {"task_test_sizes", r.task_test_sizes}};
}

/// Results document: resolved config and its hash, every per-seed report, the per-mode means,
/// and a content hash over all of the above. No timestamps, so equal inputs give equal bytes.
inline std::string results_json(const ExperimentConfig& cfg, const AggregateReport& agg) {
  nlohmann::json j;
  j["config"] = resolved_config(cfg);
  j["config_hash"] = config_hash(cfg);
  j["seeds"] = agg.seeds;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : agg.runs) j["runs"].push_back(report_json(r));
  j["summary"] = nlohmann::json::array();
  for (const auto& s : agg.summaries) {
    j["summary"].push_back({{"mode", std::string(model::branch_mode_name(s.mode))},
                            {"mean_per_task_accuracy", s.mean_per_task_accuracy},
                            {"avg_inc_accuracy", s.avg_inc_accuracy},
                            {"performance_drop", s.performance_drop}});
  }
  j["content_hash"] = util::hex64(util::fnv1a(j.dump()));
  return j.dump(2) + "\n";
}

/// One row per (seed, mode, task).
inline std::string results_csv(const AggregateReport& agg) {
  std::string out = "seed,mode,task,accuracy\n";
  char buf[64];
  for (const auto& r : agg.runs) {
    for (std::size_t t = 0; t < r.per_task_accuracy.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", r.per_task_accuracy[t]);
      out += std::to_string(r.seed) + "," + std::string(model::branch_mode_name(r.mode)) + "," +
             std::to_string(t) + "," + buf + "\n";
    }
  }
  return out;
}

inline std::string mode_label(model::BranchMode m) {
  switch (m) {
    case model::BranchMode::dual: return "Dual branch";
    case model::BranchMode::spatial_only: return "Spatial only";
    case model::BranchMode::spectral_only: return "Spectral only";
  }
  return "?";
}

/// Seed-mean accuracies in percent: one column per task, then mean accuracy and drop.
inline std::string accuracy_table(const AggregateReport& agg) {
  if (agg.summaries.empty()) return "";
  const std::size_t tasks = agg.summaries.front().mean_per_task_accuracy.size();
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-14s", "Method");
  out += buf;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::snprintf(buf, sizeof buf, " %7zu", t);
    out += buf;
  }
  out += "   Avg      PD\n";
  for (const auto& s : agg.summaries) {
    std::snprintf(buf, sizeof buf, "%-14s", mode_label(s.mode).c_str());
    out += buf;
    for (double a : s.mean_per_task_accuracy) {
      std::snprintf(buf, sizeof buf, " %7.2f", 100.0 * a);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, " %7.2f %7.2f\n", 100.0 * s.avg_inc_accuracy, 100.0 * s.performance_drop);
    out += buf;
  }
  return out;
}

}  // namespace dilhyfs::protocol
