#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dilhyfs/check/selfcheck.hpp"
#include "dilhyfs/config.hpp"
#include "dilhyfs/core/error.hpp"
#include "dilhyfs/data/manifest.hpp"
#include "dilhyfs/data/pgm.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/protocol/report.hpp"
#include "dilhyfs/protocol/runner.hpp"
#include "dilhyfs/util/fs.hpp"

namespace dilhyfs::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

/// "5" means seeds 1..5; "3,9,27" is an explicit list.
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--seeds: '" + text + "' is not a count or a comma-separated list");
    }
    try {
      return static_cast<std::uint64_t>(std::stoull(s));
    } catch (const std::out_of_range&) {
      throw ConfigError("--seeds: '" + s + "' is out of range");
    }
  };
  std::vector<std::uint64_t> out;
  if (text.find(',') == std::string::npos) {
    const std::uint64_t n = number(text);
    if (n == 0) throw ConfigError("--seeds: count must be at least 1");
    for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    out.push_back(number(text.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

/// Writes several files so that either all of them appear or none does: everything is staged
/// as temp files first and renamed only after every write succeeded.
inline void write_all_or_nothing(const std::vector<std::pair<std::filesystem::path, std::string>>& files) {
  namespace fs = std::filesystem;
  std::vector<fs::path> staged;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : staged) fs::remove(p, ec);
  };
  try {
    for (const auto& [path, bytes] : files) {
      fs::path tmp = path;
      tmp += ".staged";
      util::atomic_write(tmp, bytes);
      staged.push_back(tmp);
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      std::error_code ec;
      fs::rename(staged[i], files[i].first, ec);
      if (ec) throw DataError("cannot rename into '" + files[i].first.string() + "'");
    }
  } catch (...) {
    cleanup();
    throw;
  }
}

struct GenOptions {
  data::GenConfig gen;
  std::uint64_t seed = 7;
  std::string out = "data";
};

/// Writes every chip as PGM plus manifest.jsonl into a staging directory next to `out`, then
/// swaps it into place.
inline int cmd_gen(const GenOptions& o) {
  namespace fs = std::filesystem;
  o.gen.validate();
  Rng rng(o.seed);
  const auto generated = data::gen_dataset(o.gen, rng);

  const fs::path out = fs::path(o.out).lexically_normal();
  fs::path staging = out;
  staging += ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    for (const auto& s : generated.dataset.samples) data::write_pgm(staging / s.path, s.image);
    util::atomic_write(staging / "manifest.jsonl", data::encode_manifest(generated.manifest));
    fs::path old = out;
    old += ".old";
    fs::remove_all(old, ec);
    if (fs::exists(out)) fs::rename(out, old);
    fs::rename(staging, out);
    fs::remove_all(old, ec);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw DataError(std::string("gen: ") + e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }

  std::size_t train = 0;
  for (const auto& s : generated.dataset.samples) train += s.split == data::Split::train ? 1 : 0;
  std::printf("wrote %zu images (%zu classes x %zu, %zu train / %zu test) and %s\n",
              generated.dataset.samples.size(), o.gen.num_classes, o.gen.per_class, train,
              generated.dataset.samples.size() - train, (out / "manifest.jsonl").string().c_str());
  return kOk;
}

struct RunOptions {
  std::optional<std::string> config;
  std::optional<std::string> seeds;
  std::optional<std::string> out;
  bool verbose = false;
};

inline ExperimentConfig resolve_config(const RunOptions& o) {
  ExperimentConfig cfg = o.config ? load_config(*o.config) : ExperimentConfig{};
  if (o.seeds) cfg.seeds = parse_seeds(*o.seeds);
  cfg.validate();
  return cfg;
}

inline std::filesystem::path output_path(const RunOptions& o, const std::string& configured,
                                         const std::string& suffix = "") {
  std::filesystem::path p(configured);
  if (!suffix.empty()) p.replace_filename(p.stem().string() + suffix + p.extension().string());
  return o.out ? std::filesystem::path(*o.out) / p.filename() : p;
}

inline protocol::ProgressFn progress_printer(bool verbose) {
  if (!verbose) return {};
  return [](std::uint64_t seed, const std::string& msg) {
    std::fprintf(stderr, "[seed %llu] %s\n", static_cast<unsigned long long>(seed), msg.c_str());
  };
}

inline int cmd_run(const RunOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const auto agg = protocol::repeat_with_seeds(cfg, cfg.seeds, {model::BranchMode::dual}, progress_printer(o.verbose));
  const auto json_path = output_path(o, cfg.results_path);
  const auto csv_path = output_path(o, cfg.csv_path);
  write_all_or_nothing({{json_path, protocol::results_json(cfg, agg)}, {csv_path, protocol::results_csv(agg)}});
  std::printf("Accuracy in each task (%%), mean over %zu seed(s)\n%s", cfg.seeds.size(),
              protocol::accuracy_table(agg).c_str());
  std::printf("results: %s, %s\n", json_path.string().c_str(), csv_path.string().c_str());
  return kOk;
}

/// One trained network per seed evaluated with each branch alone and with both. Rows follow
/// the order spatial only, spectral only, dual.
inline int cmd_ablate(const RunOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const std::vector<model::BranchMode> modes{model::BranchMode::spatial_only, model::BranchMode::spectral_only,
                                             model::BranchMode::dual};
  const auto agg = protocol::repeat_with_seeds(cfg, cfg.seeds, modes, progress_printer(o.verbose));

  std::map<std::uint64_t, std::string> stream_of_seed;
  for (const auto& r : agg.runs) {
    auto [it, fresh] = stream_of_seed.emplace(r.seed, r.stream_hash);
    if (!fresh && it->second != r.stream_hash) {
      throw DataError("ablate: variants of seed " + std::to_string(r.seed) + " saw different task streams");
    }
  }
  const auto json_path = output_path(o, cfg.results_path, ".ablation");
  const auto csv_path = output_path(o, cfg.csv_path, ".ablation");
  write_all_or_nothing({{json_path, protocol::results_json(cfg, agg)}, {csv_path, protocol::results_csv(agg)}});
  std::printf("Branch contribution, mean over %zu seed(s); every variant saw the same stream (config %s)\n%s",
              cfg.seeds.size(), config_hash(cfg).c_str(), protocol::accuracy_table(agg).c_str());
  std::printf("results: %s, %s\n", json_path.string().c_str(), csv_path.string().c_str());
  return kOk;
}

struct SelfcheckOptions {
  std::uint64_t seed = 1;
  std::string corrupt;  // test hook: perturbs the analytic gradient of the named check
};

inline int cmd_selfcheck(const SelfcheckOptions& o) {
  check::GradCheckOptions gopt;
  gopt.corrupt = o.corrupt;
  const auto groups = check::run_selfcheck(o.seed, gopt);
  std::vector<std::string> failures;
  for (const auto& g : groups) {
    std::printf("[%s] %-12s %zu/%zu checks passed\n", g.pass() ? "PASS" : "FAIL", g.name.c_str(), g.passed(),
                g.checks.size());
    for (const auto& c : g.checks) {
      if (!c.pass) failures.push_back(g.name + ": " + c.name + " (" + c.detail + ")");
    }
  }
  if (failures.empty()) {
    std::printf("all checks passed\n");
    return kOk;
  }
  std::printf("%zu check(s) failed:\n", failures.size());
  for (const auto& f : failures) std::printf("  %s\n", f.c_str());
  return kFailure;
}

/// Maps the error taxonomy onto exit codes.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const DataError*>(&e)) return kData;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kFailure;
}

inline int main(int argc, const char* const* argv) {
  CLI::App app{"Dual-branch few-shot class-incremental learning on SAR-like imagery"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dilhyfs 1.0");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic SAR-like dataset (PGM files + manifest)");
  gen_cmd->add_option("--classes", gen.gen.num_classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.gen.per_class, "Images per class")->capture_default_str();
  gen_cmd->add_option("--size", gen.gen.size, "Image side, a power of two")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();

  RunOptions run;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", run.config, "Experiment config (JSON)");
    cmd->add_option("--seeds", run.seeds, "Seed count n (seeds 1..n) or a comma-separated list");
    cmd->add_option("--out", run.out, "Directory for the results JSON and CSV");
    cmd->add_flag("-v,--verbose", run.verbose, "Print per-epoch progress to stderr");
  };
  auto* run_cmd = app.add_subcommand("run", "Run the FSCIL experiment over the configured seeds");
  add_run_options(run_cmd);
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare spatial-only, spectral-only and dual-branch features");
  add_run_options(ablate_cmd);

  SelfcheckOptions sc;
  auto* sc_cmd = app.add_subcommand("selfcheck", "Run the numerical invariant battery");
  sc_cmd->add_option("--seed", sc.seed, "Seed for the randomized checks")->capture_default_str();
  sc_cmd->add_option("--corrupt", sc.corrupt, "Perturb the backward pass of one layer (test hook)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (run_cmd->parsed()) return cmd_run(run);
    if (ablate_cmd->parsed()) return cmd_ablate(run);
    if (sc_cmd->parsed()) return cmd_selfcheck(sc);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dilhyfs: %s\n", e.what());
    return exit_code_for(e);
  }
  return kFailure;
}

}  // namespace dilhyfs::cli
