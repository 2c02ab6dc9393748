#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/data/dataset.hpp"
#include "dilhyfs/util/hash.hpp"

namespace dilhyfs::protocol {

enum class Scenario { n_way_k_shot, one_step_k_shot };

inline std::string_view scenario_name(Scenario s) {
  return s == Scenario::n_way_k_shot ? "n_way_k_shot" : "one_step_k_shot";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "n_way_k_shot") return Scenario::n_way_k_shot;
  if (s == "one_step_k_shot") return Scenario::one_step_k_shot;
  throw ConfigError("scenario: unknown kind '" + std::string(s) + "' (n_way_k_shot|one_step_k_shot)");
}

struct ScenarioConfig {
  Scenario scenario = Scenario::n_way_k_shot;
  std::size_t base_classes = 4;
  std::size_t n_way = 1;  // ignored by one_step_k_shot
  std::size_t k_shot = 5;
  std::size_t total_classes = 10;
  std::optional<std::vector<std::size_t>> class_order;  // dataset labels; seeded permutation if absent

  std::size_t incremental_classes() const { return total_classes - base_classes; }

  /// Number of classes introduced by each task, base task first when base_classes > 0.
  std::vector<std::size_t> task_class_counts() const {
    validate();
    std::vector<std::size_t> out;
    if (base_classes > 0) out.push_back(base_classes);
    const std::size_t inc = incremental_classes();
    if (inc == 0) return out;
    if (scenario == Scenario::one_step_k_shot) {
      out.push_back(inc);
    } else {
      for (std::size_t i = 0; i < inc / n_way; ++i) out.push_back(n_way);
    }
    return out;
  }

  std::size_t num_tasks() const { return task_class_counts().size(); }

  void validate() const {
    if (total_classes == 0) throw ConfigError("scenario: total_classes must be >= 1");
    if (base_classes > total_classes) throw ConfigError("scenario: base_classes exceeds total_classes");
    if (base_classes == 1) throw ConfigError("scenario: a base task needs at least 2 classes");
    if (k_shot == 0) throw ConfigError("scenario: k_shot must be >= 1");
    if (scenario == Scenario::n_way_k_shot) {
      if (n_way == 0) throw ConfigError("scenario: n_way must be >= 1");
      if (incremental_classes() % n_way != 0) {
        throw ConfigError("scenario: " + std::to_string(incremental_classes()) +
                          " incremental classes do not split into " + std::to_string(n_way) + "-way tasks");
      }
    }
    if (class_order) {
      if (class_order->size() != total_classes) {
        throw ConfigError("scenario: class_order lists " + std::to_string(class_order->size()) +
                          " classes, expected " + std::to_string(total_classes));
      }
      auto sorted = *class_order;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("scenario: class_order repeats a class");
      }
    }
  }
};

enum class TaskKind { base, incremental };

/// One image in a stream. `label` is the stream label (0.. in introduction order);
/// (domain, source_class) identifies the class in its originating dataset.
struct StreamSample {
  Tensor image;
  std::size_t label = 0;
  std::string domain;
  std::size_t source_class = 0;
  data::Split split = data::Split::train;
};

struct Task {
  std::size_t index = 0;
  TaskKind kind = TaskKind::incremental;
  std::size_t shots = 0;             // samples per class for incremental tasks; 0 for the base task
  std::vector<std::size_t> classes;  // stream labels introduced by this task
  std::vector<std::size_t> train;    // indices into TaskStream::samples
  std::vector<std::size_t> test;     // test samples of every class seen up to this task
};

struct TaskStream {
  std::vector<StreamSample> samples;
  std::vector<Task> tasks;

  std::size_t num_classes() const {
    std::size_t n = 0;
    for (const auto& t : tasks) n += t.classes.size();
    return n;
  }

  /// Content fingerprint over task layout, sample identity and image bytes.
  std::string hash() const {
    util::Hasher h;
    h.u64(samples.size());
    for (const auto& s : samples) {
      h.u64(s.label).u64(s.source_class).u64(s.split == data::Split::train ? 0 : 1).bytes(s.domain);
      for (double v : s.image.values()) h.u64(std::bit_cast<std::uint64_t>(v));
    }
    h.u64(tasks.size());
    for (const auto& t : tasks) {
      h.u64(t.kind == TaskKind::base ? 0 : 1).u64(t.classes.size());
      for (auto c : t.classes) h.u64(c);
      h.u64(t.train.size());
      for (auto i : t.train) h.u64(i);
      h.u64(t.test.size());
      for (auto i : t.test) h.u64(i);
    }
    return h.hex();
  }
};

/// Rebuilds every task's test pool as the test samples of all classes seen so far.
inline void assign_test_pools(TaskStream& stream) {
  std::vector<bool> seen;
  for (auto& task : stream.tasks) {
    for (std::size_t c : task.classes) {
      if (c >= seen.size()) seen.resize(c + 1, false);
      seen[c] = true;
    }
    task.test.clear();
    for (std::size_t i = 0; i < stream.samples.size(); ++i) {
      const auto& s = stream.samples[i];
      if (s.split == data::Split::test && s.label < seen.size() && seen[s.label]) task.test.push_back(i);
    }
  }
}

/// Base task: every training sample of the base classes. Each incremental task: exactly k
/// training samples per new class, drawn without replacement by a seeded shuffle. Stream
/// labels follow the class order, which is a seeded permutation unless given explicitly.
inline TaskStream build_stream(const data::Dataset& ds, const ScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.total_classes > ds.num_classes) {
    throw DataError("build_stream: scenario needs " + std::to_string(cfg.total_classes) +
                    " classes but dataset '" + ds.domain + "' has " + std::to_string(ds.num_classes));
  }
  std::vector<std::size_t> order;
  if (cfg.class_order) {
    order = *cfg.class_order;
    for (std::size_t c : order) {
      if (c >= ds.num_classes) {
        throw ConfigError("scenario: class_order entry " + std::to_string(c) + " is not in the dataset");
      }
    }
  } else {
    order.resize(ds.num_classes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(cfg.total_classes);
  }

  TaskStream stream;
  auto add_samples = [&](const std::vector<std::size_t>& rows, std::size_t label, std::vector<std::size_t>* train) {
    for (std::size_t r : rows) {
      const auto& s = ds.samples[r];
      if (train && s.split == data::Split::train) train->push_back(stream.samples.size());
      stream.samples.push_back({s.image, label, ds.domain, s.label, s.split});
    }
  };

  std::size_t next = 0;
  const auto counts = cfg.task_class_counts();
  for (std::size_t t = 0; t < counts.size(); ++t) {
    Task task;
    task.index = t;
    task.kind = (t == 0 && cfg.base_classes > 0) ? TaskKind::base : TaskKind::incremental;
    task.shots = task.kind == TaskKind::base ? 0 : cfg.k_shot;
    for (std::size_t j = 0; j < counts[t]; ++j, ++next) {
      const std::size_t source = order[next];
      const std::size_t label = next;
      task.classes.push_back(label);
      auto train_rows = ds.indices(source, data::Split::train);
      const auto test_rows = ds.indices(source, data::Split::test);
      const std::size_t need = task.kind == TaskKind::base ? 2 : cfg.k_shot;
      if (train_rows.size() < need || test_rows.empty()) {
        throw DataError("build_stream: class " + std::to_string(source) + " of '" + ds.domain + "' has " +
                        std::to_string(train_rows.size()) + " train / " + std::to_string(test_rows.size()) +
                        " test samples; needs at least " + std::to_string(need) + " / 1");
      }
      if (task.kind == TaskKind::incremental) {
        rng.shuffle(train_rows);
        train_rows.resize(cfg.k_shot);
        std::sort(train_rows.begin(), train_rows.end());
      }
      add_samples(train_rows, label, &task.train);
      add_samples(test_rows, label, nullptr);
    }
    stream.tasks.push_back(std::move(task));
  }
  assign_test_pools(stream);
  return stream;
}

/// Concatenates streams from several sources. The first contributes all of its tasks; later
/// ones contribute incremental tasks only. Labels are remapped to stay contiguous in
/// introduction order; a class (domain, source class) appearing twice is rejected.
inline TaskStream compose_cross_domain(const std::vector<TaskStream>& sources) {
  if (sources.empty()) throw CompositionError("compose: no source streams");
  TaskStream out;
  std::vector<std::pair<std::string, std::size_t>> identities;
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const auto& src = sources[si];
    const std::size_t sample_offset = out.samples.size();
    const std::size_t label_offset = out.num_classes();
    for (const auto& task : src.tasks) {
      if (si > 0 && task.kind == TaskKind::base) {
        throw CompositionError("compose: source " + std::to_string(si) +
                               " has a base task; only the first source may");
      }
    }
    std::vector<std::size_t> remap(src.num_classes(), 0);
    {
      std::size_t next = label_offset;
      for (const auto& task : src.tasks) {
        for (std::size_t c : task.classes) remap.at(c) = next++;
      }
    }
    for (const auto& s : src.samples) {
      const std::pair<std::string, std::size_t> id{s.domain, s.source_class};
      if (std::find(identities.begin(), identities.end(), id) != identities.end()) {
        throw CompositionError("compose: class " + std::to_string(s.source_class) + " of domain '" +
                               s.domain + "' appears in more than one source");
      }
      StreamSample copy = s;
      copy.label = remap.at(s.label);
      out.samples.push_back(std::move(copy));
    }
    for (const auto& s : src.samples) {
      const std::pair<std::string, std::size_t> id{s.domain, s.source_class};
      if (std::find(identities.begin(), identities.end(), id) == identities.end()) identities.push_back(id);
    }
    for (const auto& task : src.tasks) {
      Task t;
      t.index = out.tasks.size();
      t.kind = task.kind;
      t.shots = task.shots;
      for (std::size_t c : task.classes) t.classes.push_back(remap.at(c));
      for (std::size_t i : task.train) t.train.push_back(i + sample_offset);
      out.tasks.push_back(std::move(t));
    }
  }
  assign_test_pools(out);
  return out;
}

/// Protocol invariants of a stream; returns one message per violation (empty when valid).
inline std::vector<std::string> check_stream(const TaskStream& stream) {
  std::vector<std::string> bad;
  std::vector<std::size_t> introduced_at(stream.num_classes(), SIZE_MAX);
  for (const auto& task : stream.tasks) {
    for (std::size_t c : task.classes) {
      if (c >= introduced_at.size()) {
        bad.push_back("task " + std::to_string(task.index) + ": label " + std::to_string(c) + " out of range");
      } else if (introduced_at[c] != SIZE_MAX) {
        bad.push_back("class " + std::to_string(c) + " introduced twice");
      } else {
        introduced_at[c] = task.index;
      }
    }
  }
  for (std::size_t c = 0; c < introduced_at.size(); ++c) {
    if (introduced_at[c] == SIZE_MAX) bad.push_back("label " + std::to_string(c) + " is never introduced");
  }
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto& task = stream.tasks[t];
    if (task.index != t) bad.push_back("task " + std::to_string(t) + " carries index " + std::to_string(task.index));
    if (task.kind == TaskKind::base && t != 0) bad.push_back("base task at position " + std::to_string(t));
    if (task.kind == TaskKind::incremental && task.train.size() != task.shots * task.classes.size()) {
      bad.push_back("task " + std::to_string(t) + " has " + std::to_string(task.train.size()) +
                    " samples, expected " + std::to_string(task.shots * task.classes.size()));
    }
    for (std::size_t i : task.train) {
      const auto& s = stream.samples.at(i);
      const bool own = std::find(task.classes.begin(), task.classes.end(), s.label) != task.classes.end();
      if (!own || s.split != data::Split::train) {
        bad.push_back("task " + std::to_string(t) + " trains on sample " + std::to_string(i) +
                      " of class " + std::to_string(s.label) + " outside its own classes or split");
      }
    }
    for (std::size_t i : task.test) {
      const auto& s = stream.samples.at(i);
      if (s.split != data::Split::test || s.label >= introduced_at.size() || introduced_at[s.label] > t) {
        bad.push_back("task " + std::to_string(t) + " evaluates on unseen or non-test sample " + std::to_string(i));
      }
    }
    if (t > 0) {
      const auto& prev = stream.tasks[t - 1].test;
      const bool contains = std::includes(task.test.begin(), task.test.end(), prev.begin(), prev.end());
      if (!contains || task.test.size() <= prev.size()) {
        bad.push_back("test pool of task " + std::to_string(t) + " does not strictly contain the previous one");
      }
    }
  }
  return bad;
}

}  // namespace dilhyfs::protocol
