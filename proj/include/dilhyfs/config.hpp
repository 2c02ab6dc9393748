#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/model/config.hpp"
#include "dilhyfs/model/train.hpp"
#include "dilhyfs/protocol/stream.hpp"
#include "dilhyfs/prototype.hpp"
#include "dilhyfs/util/fs.hpp"
#include "dilhyfs/util/hash.hpp"

namespace dilhyfs {

using nlohmann::json;

/// One data source: synthetic generation parameters or a manifest path, plus the scenario
/// that turns it into a task stream.
struct SourceConfig {
  std::string domain = "synthetic";
  std::optional<data::GenConfig> synthetic = data::GenConfig{};
  std::uint64_t data_seed = 7;
  std::optional<std::string> manifest;
  protocol::ScenarioConfig scenario;
};

struct ExperimentConfig {
  model::ModelConfig model;
  model::TrainConfig train;
  prototype::PrototypeConfig prototype;
  std::vector<SourceConfig> sources{SourceConfig{}};
  std::vector<std::uint64_t> seeds{1};
  std::string results_path = "results.json";
  std::string csv_path = "results.csv";

  void validate() const {
    model.validate();
    train.validate();
    prototype.validate();
    if (sources.empty()) throw ConfigError("config: at least one data source is required");
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto& s = sources[i];
      if (s.domain.empty()) throw ConfigError("config: source " + std::to_string(i) + " needs a domain name");
      if (s.synthetic.has_value() == s.manifest.has_value()) {
        throw ConfigError("config: source '" + s.domain + "' must set exactly one of synthetic or manifest");
      }
      if (s.synthetic) {
        s.synthetic->validate();
        if (s.synthetic->size != model.input_size) {
          throw ConfigError("config: source '" + s.domain + "' image size " + std::to_string(s.synthetic->size) +
                            " differs from model input_size " + std::to_string(model.input_size));
        }
      }
      s.scenario.validate();
      if (i == 0 && s.scenario.base_classes < 2) {
        throw ConfigError("config: the first source must define a base task of at least 2 classes");
      }
      if (i > 0 && s.scenario.base_classes != 0) {
        throw ConfigError("config: source '" + s.domain + "' must have base_classes 0 (only the first has a base task)");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (sources[j].domain == s.domain) throw ConfigError("config: duplicate domain '" + s.domain + "'");
      }
    }
    if (seeds.empty()) throw ConfigError("config: seeds must list at least one seed");
  }
};

namespace config_detail {

/// Reads keys from a JSON object; finish() rejects any key left unread.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  /// Throws on the first key that no accessor asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path(key) + ": wrong type (got " + std::string(v.type_name()) + ")");
    }
  }

  template <typename T>
  void get_list(const std::string& key, std::vector<T>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(path(key) + ": expected an array");
    std::vector<T> tmp;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) throw ConfigError(path(key) + ": entries must be non-negative integers");
      tmp.push_back(e.get<T>());
    }
    out = std::move(tmp);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read_model(const json& j, model::ModelConfig& m) {
  Reader r(j, "model");
  r.get("input_size", m.input_size);
  r.get_list("stage_dims", m.stage_dims);
  r.get_list("spectral_blocks", m.spectral_blocks);
  r.get_list("spatial_blocks", m.spatial_blocks);
  r.get("mlp_ratio", m.mlp_ratio);
  r.get("filter_init_std", m.filter_init_std);
  r.finish();
}

inline void read_train(const json& j, model::TrainConfig& t) {
  Reader r(j, "train");
  r.get("learning_rate", t.sgd.learning_rate);
  r.get("weight_decay", t.sgd.weight_decay);
  r.get("batch_size", t.sgd.batch_size);
  r.get("epochs", t.sgd.epochs);
  r.get("pretrain_epochs", t.sgd.pretrain_epochs);
  r.get("augment", t.augment);
  r.finish();
}

inline void read_loss(const json& j, losses::LossConfig& l) {
  Reader r(j, "loss");
  r.get("gamma", l.gamma);
  r.get("center_weight", l.center_weight);
  r.get("center_alpha", l.center_alpha);
  r.finish();
}

inline void read_prototype(const json& j, prototype::PrototypeConfig& p) {
  Reader r(j, "prototype");
  r.get("projection_dim", p.projection_dim);
  r.get("lambda_min_exp", p.lambda_min_exp);
  r.get("lambda_max_exp", p.lambda_max_exp);
  std::string act(prototype::activation_name(p.activation));
  r.get("activation", act);
  p.activation = prototype::parse_activation(act);
  r.get("normalize_class_means", p.normalize_class_means);
  r.get("validation_fraction", p.validation_fraction);
  r.finish();
}

inline void read_gen(const json& j, data::GenConfig& g, std::uint64_t& seed) {
  Reader r(j, "synthetic");
  r.get("classes", g.num_classes);
  r.get("per_class", g.per_class);
  r.get("size", g.size);
  r.get("min_scatterers", g.min_scatterers);
  r.get("max_scatterers", g.max_scatterers);
  r.get("psf_sigma", g.psf_sigma);
  r.get("jitter_sigma", g.jitter_sigma);
  r.get("azimuth_spread", g.azimuth_spread);
  r.get("clutter", g.clutter);
  r.get("speckle", g.speckle);
  r.get("min_class_distance", g.min_class_distance);
  r.get("train_fraction", g.train_fraction);
  r.get("seed", seed);
  r.finish();
}

inline void read_scenario(const json& j, protocol::ScenarioConfig& s) {
  Reader r(j, "scenario");
  std::string kind(protocol::scenario_name(s.scenario));
  r.get("kind", kind);
  s.scenario = protocol::parse_scenario(kind);
  r.get("base_classes", s.base_classes);
  r.get("n_way", s.n_way);
  r.get("k_shot", s.k_shot);
  r.get("total_classes", s.total_classes);
  if (r.has("class_order")) {
    std::vector<std::size_t> order;
    r.get_list("class_order", order);
    s.class_order = order;
  }
  r.finish();
}

inline SourceConfig read_source(const json& j, std::size_t index) {
  SourceConfig s;
  s.synthetic.reset();
  Reader r(j, "sources[" + std::to_string(index) + "]");
  r.get("domain", s.domain);
  if (r.has("synthetic")) {
    data::GenConfig g;
    read_gen(r.sub("synthetic"), g, s.data_seed);
    s.synthetic = g;
  }
  if (r.has("manifest")) {
    std::string m;
    r.get("manifest", m);
    s.manifest = m;
  }
  if (r.has("scenario")) read_scenario(r.sub("scenario"), s.scenario);
  r.finish();
  return s;
}

}  // namespace config_detail

/// Parses a config document. Absent keys keep their defaults; unknown keys and wrongly typed
/// values raise ConfigError. The result is validated before it is returned.
inline ExperimentConfig parse_config(const json& j) {
  using namespace config_detail;
  ExperimentConfig cfg;
  {
    Reader r(j, "config");
    if (r.has("model")) read_model(r.sub("model"), cfg.model);
    if (r.has("train")) read_train(r.sub("train"), cfg.train);
    if (r.has("loss")) read_loss(r.sub("loss"), cfg.train.loss);
    if (r.has("prototype")) read_prototype(r.sub("prototype"), cfg.prototype);
    if (r.has("sources")) {
      const json& src = r.sub("sources");
      if (!src.is_array()) throw ConfigError("config.sources: expected an array");
      cfg.sources.clear();
      for (std::size_t i = 0; i < src.size(); ++i) cfg.sources.push_back(read_source(src[i], i));
    }
    if (r.has("seeds")) r.get_list("seeds", cfg.seeds);
    if (r.has("output")) {
      Reader o(r.sub("output"), "output");
      o.get("results", cfg.results_path);
      o.get("csv", cfg.csv_path);
      o.finish();
    }
    r.finish();
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = util::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("config: cannot read '" + path.string() + "'");
  }
  return parse_config_text(text);
}

/// Every resolved value, so a results file alone identifies the run. Seeds and output paths
/// are excluded; they do not change the numbers of a given seed.
inline json resolved_config(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"input_size", c.model.input_size},
                {"stage_dims", c.model.stage_dims},
                {"spectral_blocks", c.model.spectral_blocks},
                {"spatial_blocks", c.model.spatial_blocks},
                {"mlp_ratio", c.model.mlp_ratio},
                {"filter_init_std", c.model.filter_init_std}};
  j["train"] = {{"learning_rate", c.train.sgd.learning_rate},
                {"weight_decay", c.train.sgd.weight_decay},
                {"batch_size", c.train.sgd.batch_size},
                {"epochs", c.train.sgd.epochs},
                {"pretrain_epochs", c.train.sgd.pretrain_epochs},
                {"augment", c.train.augment}};
  j["loss"] = {{"gamma", c.train.loss.gamma},
               {"center_weight", c.train.loss.center_weight},
               {"center_alpha", c.train.loss.center_alpha}};
  j["prototype"] = {{"projection_dim", c.prototype.projection_dim},
                    {"lambda_min_exp", c.prototype.lambda_min_exp},
                    {"lambda_max_exp", c.prototype.lambda_max_exp},
                    {"activation", std::string(prototype::activation_name(c.prototype.activation))},
                    {"normalize_class_means", c.prototype.normalize_class_means},
                    {"validation_fraction", c.prototype.validation_fraction}};
  j["sources"] = json::array();
  for (const auto& s : c.sources) {
    json sj;
    sj["domain"] = s.domain;
    if (s.synthetic) {
      const auto& g = *s.synthetic;
      sj["synthetic"] = {{"classes", g.num_classes},       {"per_class", g.per_class},
                         {"size", g.size},                 {"min_scatterers", g.min_scatterers},
                         {"max_scatterers", g.max_scatterers}, {"psf_sigma", g.psf_sigma},
                         {"jitter_sigma", g.jitter_sigma}, {"azimuth_spread", g.azimuth_spread},
                         {"clutter", g.clutter},           {"speckle", g.speckle},
                         {"min_class_distance", g.min_class_distance},
                         {"train_fraction", g.train_fraction}, {"seed", s.data_seed}};
    }
    if (s.manifest) sj["manifest"] = *s.manifest;
    const auto& sc = s.scenario;
    sj["scenario"] = {{"kind", std::string(protocol::scenario_name(sc.scenario))},
                      {"base_classes", sc.base_classes},
                      {"n_way", sc.n_way},
                      {"k_shot", sc.k_shot},
                      {"total_classes", sc.total_classes}};
    if (sc.class_order) sj["scenario"]["class_order"] = *sc.class_order;
    j["sources"].push_back(sj);
  }
  return j;
}

inline std::string config_hash(const ExperimentConfig& c) {
  return util::hex64(util::fnv1a(resolved_config(c).dump()));
}

}  // namespace dilhyfs
