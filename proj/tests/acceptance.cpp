// Acceptance battery: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dilhyfs.hpp"

using namespace dilhyfs;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string first_failure(const check::CheckGroup& g) {
  for (const auto& c : g.checks)
    if (!c.pass) return c.name + " (" + c.detail + ")";
  return std::to_string(g.checks.size()) + " checks";
}

Verdict timed_group(const std::function<check::CheckGroup()>& run, double budget) {
  const auto t0 = Clock::now();
  const auto g = run();
  const double s = seconds_since(t0);
  char buf[64];
  std::snprintf(buf, sizeof buf, ", %.2fs of %.0fs", s, budget);
  return {g.pass() && s < budget, first_failure(g) + buf};
}

Verdict metrics() {
  const std::vector<double> t1{94.54, 80.21, 84.10, 85.08, 78.98, 81.93, 83.60};
  const std::vector<double> t2{90.54, 88.65};
  const double a1 = protocol::average_incremental_accuracy(t1), pd1 = protocol::performance_drop(t1);
  const double a2 = protocol::average_incremental_accuracy(t2), pd2 = protocol::performance_drop(t2);
  const bool ok = std::abs(a1 - 84.06) <= 0.005 && std::abs(pd1 - 10.94) <= 0.001 &&
                  std::abs(a2 - 89.595) <= 0.005 && std::abs(pd2 - 1.89) <= 0.001;
  char buf[160];
  std::snprintf(buf, sizeof buf, "single domain %.4f / %.4f, cross domain %.4f / %.4f", a1, pd1, a2, pd2);
  return {ok, buf};
}

Verdict freeze_and_export() {
  model::ModelConfig mc;
  mc.input_size = 16;
  mc.stage_dims = {4, 6, 8, 8};
  mc.spatial_blocks = {1, 1, 1, 1};
  mc.spectral_blocks = {1, 1, 1, 1};
  Rng rng(1);
  model::DualBranchModel net(mc, rng);
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 12; ++i) {
    images.push_back(rng_normal(rng, {1, 16, 16}));
    labels.push_back(i % 3);
  }
  model::TrainConfig tc;
  tc.sgd.batch_size = 4;
  tc.sgd.pretrain_epochs = 1;
  tc.sgd.epochs = 2;
  std::vector<std::vector<double>> after_a;
  model::train_base(net, images, labels, 3, tc, rng, [&](char phase, std::size_t, const model::EpochStats&) {
    if (phase != 'A') return;
    after_a.clear();
    for (const nn::Parameter* p : net.spectral_parameters()) after_a.emplace_back(p->value.values().begin(), p->value.values().end());
  });
  bool bitwise = !after_a.empty();
  std::size_t i = 0;
  for (const nn::Parameter* p : net.spectral_parameters()) {
    const auto& before = after_a.at(i++);
    for (std::size_t k = 0; k < before.size(); ++k)
      bitwise = bitwise && std::bit_cast<std::uint64_t>(before[k]) == std::bit_cast<std::uint64_t>(p->value[k]);
  }
  const auto exported = io::decode_checkpoint(io::encode_checkpoint(net.export_feature_extractor()));
  bool headless = !net.has_head();
  for (const auto& t : exported) headless = headless && t.name.rfind("head", 0) == std::string::npos;
  return {bitwise && headless, std::string(bitwise ? "spectral branch unchanged bit for bit" : "spectral branch moved") +
                                   ", " + std::to_string(exported.size()) + " exported tensors" +
                                   (headless ? ", no head" : ", head present")};
}

Verdict end_to_end() {
  const auto cfg = load_config(std::string(DILHYFS_CONFIG_DIR) + "/fscil_1way5shot.json");
  const auto t0 = Clock::now();
  const auto agg = protocol::repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::spectral_only, model::BranchMode::dual});
  const double s = seconds_since(t0);

  bool invariants = true;
  const auto sources = protocol::load_sources(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    const auto stream = protocol::build_experiment_stream(cfg, sources, seed);
    invariants = invariants && protocol::check_stream(stream).empty() && stream.tasks.size() == 7;
  }
  const auto grid = cfg.prototype.lambda_grid();
  for (std::size_t i = 0; i < agg.runs.size(); ++i) {
    const auto& r = agg.runs[i];
    invariants = invariants && r.per_task_accuracy.size() == 7 &&
                 std::find(grid.begin(), grid.end(), r.lambda) != grid.end() &&
                 r.stream_hash == agg.runs[i - i % 2].stream_hash;
    for (double a : r.per_task_accuracy) invariants = invariants && a >= 0.0 && a <= 1.0;
  }
  const auto& spectral = agg.summaries.at(0);
  const auto& dual = agg.summaries.at(1);
  const double final_acc = dual.mean_per_task_accuracy.back();
  const bool ok = invariants && s < 600.0 && final_acc >= 0.60 &&
                  dual.avg_inc_accuracy >= spectral.avg_inc_accuracy - 0.02;
  char buf[200];
  std::snprintf(buf, sizeof buf, "A_T %.4f, mean acc dual %.4f vs spectral only %.4f, invariants %s, %.0fs of 600s",
                final_acc, dual.avg_inc_accuracy, spectral.avg_inc_accuracy, invariants ? "hold" : "violated", s);
  return {ok, buf};
}

Verdict reproducible() {
  auto cfg = load_config(std::string(DILHYFS_CONFIG_DIR) + "/smoke.json");
  cfg.seeds = {3, 9, 27};
  const auto a = protocol::results_json(cfg, protocol::repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual}));
  const auto b = protocol::results_json(cfg, protocol::repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual}));
  return {a == b, std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"1 metrics", metrics},
      {"2 spectral", [] { return timed_group([] { return check::spectral_group(1); }, 5.0); }},
      {"3 gradients", [] { return timed_group([] { return check::gradient_group(1); }, 30.0); }},
      {"4 incremental", [] { return timed_group([] { return check::incremental_group(1); }, 10.0); }},
      {"5 freeze/export", freeze_and_export},
      {"6 end-to-end", end_to_end},
      {"7 determinism", reproducible},
      {"8 lambda", [] { return timed_group([] { return check::lambda_group(1); }, 10.0); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("[%s] %-16s %s\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
