#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/data/dataset.hpp"
#include "dilhyfs/data/manifest.hpp"
#include "dilhyfs/spectral/fft.hpp"

namespace dilhyfs::data {

struct Scatterer {
  double x = 0.0;  // position in [-1, 1]^2
  double y = 0.0;
  double amplitude = 1.0;
};

struct ClassSpec {
  std::size_t class_id = 0;
  std::vector<Scatterer> scatterers;
  double psf_sigma = 1.0;  // pixels
};

struct SampleParams {
  double azimuth = 0.0;       // radians in [0, 2 pi)
  double jitter_sigma = 0.0;  // log-amplitude std; 0 means every factor is exactly 1
  bool speckle = true;
  double clutter = 0.01;  // background level added before speckle
  std::uint64_t seed = 0;
};

/// Fraction of the image half-width spanned by the unit box.
inline constexpr double kFootprint = 0.7;

/// Renders one [1 x size x size] chip: rotated scatterers splatted as Gaussian PSFs with
/// lognormal amplitude jitter, plus clutter, times an exponential speckle field, then
/// min-max normalized to [0, 1].
inline Tensor render_sample(const ClassSpec& spec, const SampleParams& params, std::size_t size) {
  if (!spectral::is_power_of_two(size)) {
    throw ConfigError("render: size " + std::to_string(size) + " is not a power of two");
  }
  Rng rng(params.seed);
  const double c = std::cos(params.azimuth), s = std::sin(params.azimuth);
  const double half = 0.5 * static_cast<double>(size);
  const double center = half - 0.5;
  const double inv_two_var = 1.0 / (2.0 * spec.psf_sigma * spec.psf_sigma);
  Tensor img({1, size, size});
  for (const auto& sc : spec.scatterers) {
    const double jitter = params.jitter_sigma > 0.0 ? std::exp(params.jitter_sigma * rng.normal()) : 1.0;
    const double amp = sc.amplitude * jitter;
    const double px = center + kFootprint * half * (c * sc.x - s * sc.y);
    const double py = center + kFootprint * half * (s * sc.x + c * sc.y);
    for (std::size_t r = 0; r < size; ++r) {
      const double dy = static_cast<double>(r) - py;
      for (std::size_t col = 0; col < size; ++col) {
        const double dx = static_cast<double>(col) - px;
        img[r * size + col] += amp * std::exp(-(dx * dx + dy * dy) * inv_two_var);
      }
    }
  }
  if (params.speckle) {
    for (double& v : img.values()) v = (v + params.clutter) * rng.exponential();
  }
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const double min = *lo, range = *hi - *lo;
  for (double& v : img.values()) v = range > 0.0 ? (v - min) / range : 0.0;
  return img;
}

struct GenConfig {
  std::size_t num_classes = 10;
  std::size_t per_class = 100;
  std::size_t size = 32;
  std::size_t min_scatterers = 3;
  std::size_t max_scatterers = 8;
  double psf_sigma = 1.2;
  double jitter_sigma = 0.15;
  double azimuth_spread = std::numbers::pi / 4;  // azimuth drawn from [0, spread)
  double clutter = 0.01;
  bool speckle = true;
  double min_class_distance = 0.25;
  double train_fraction = 0.7;

  void validate() const {
    if (num_classes < 2) throw ConfigError("gen: need at least 2 classes");
    if (per_class < 2) throw ConfigError("gen: need at least 2 samples per class for both splits");
    if (!spectral::is_power_of_two(size)) {
      throw ConfigError("gen: size " + std::to_string(size) + " is not a power of two");
    }
    if (min_scatterers == 0 || min_scatterers > max_scatterers) {
      throw ConfigError("gen: scatterer count range must satisfy 1 <= min <= max");
    }
    if (!(psf_sigma > 0.0)) throw ConfigError("gen: psf_sigma must be positive");
    if (!(jitter_sigma >= 0.0)) throw ConfigError("gen: jitter_sigma must be >= 0");
    if (!(azimuth_spread >= 0.0 && azimuth_spread <= 2.0 * std::numbers::pi)) {
      throw ConfigError("gen: azimuth_spread must lie in [0, 2 pi]");
    }
    if (!(clutter >= 0.0)) throw ConfigError("gen: clutter must be >= 0");
    if (!(min_class_distance >= 0.0)) throw ConfigError("gen: min_class_distance must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ConfigError("gen: train_fraction must lie in (0, 1)");
    }
  }
};

/// Symmetric Chamfer distance: mean nearest-neighbour distance in both directions.
inline double constellation_distance(const ClassSpec& a, const ClassSpec& b) {
  auto directed = [](const ClassSpec& p, const ClassSpec& q) {
    double sum = 0.0;
    for (const auto& u : p.scatterers) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& v : q.scatterers) best = std::min(best, std::hypot(u.x - v.x, u.y - v.y));
      sum += best;
    }
    return sum / static_cast<double>(p.scatterers.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

inline constexpr std::size_t kMaxRejections = 10000;

/// Draws class constellations, rejecting any closer than min_class_distance to an earlier one.
inline std::vector<ClassSpec> random_class_specs(const GenConfig& cfg, Rng& rng) {
  std::vector<ClassSpec> specs;
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= kMaxRejections) {
        throw GenerationError("gen: no constellation for class " + std::to_string(k) + " after " +
                              std::to_string(kMaxRejections) + " attempts (min_class_distance " +
                              std::to_string(cfg.min_class_distance) + " too strict)");
      }
      ClassSpec spec;
      spec.class_id = k;
      spec.psf_sigma = cfg.psf_sigma;
      const std::size_t n = cfg.min_scatterers + rng.below(cfg.max_scatterers - cfg.min_scatterers + 1);
      for (std::size_t i = 0; i < n; ++i) {
        spec.scatterers.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.5, 1.0)});
      }
      const bool far = std::all_of(specs.begin(), specs.end(), [&](const ClassSpec& other) {
        return constellation_distance(spec, other) >= cfg.min_class_distance;
      });
      if (far) {
        specs.push_back(std::move(spec));
        break;
      }
    }
  }
  return specs;
}

struct GeneratedDataset {
  Dataset dataset;
  std::vector<ClassSpec> specs;
  std::vector<ManifestRow> manifest;
};

inline std::string sample_path(std::size_t label, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "class_%02zu/img_%04zu.pgm", label, index);
  return buf;
}

/// Generates per_class chips per class with a stratified train/test split. Sample j of
/// class k uses the child stream rng.split(k * per_class + j) after the class specs and
/// split permutations are drawn, so every image is reproducible on its own.
inline GeneratedDataset gen_dataset(const GenConfig& cfg, Rng& rng, const std::string& domain = "synthetic") {
  cfg.validate();
  GeneratedDataset out;
  out.specs = random_class_specs(cfg, rng);
  out.dataset.domain = domain;
  out.dataset.num_classes = cfg.num_classes;
  out.dataset.image_size = cfg.size;
  const auto n_train = static_cast<std::size_t>(
      std::clamp<double>(std::round(cfg.train_fraction * static_cast<double>(cfg.per_class)), 1.0,
                         static_cast<double>(cfg.per_class - 1)));
  std::vector<std::vector<std::size_t>> perms(cfg.num_classes);
  for (auto& p : perms) {
    p.resize(cfg.per_class);
    for (std::size_t j = 0; j < cfg.per_class; ++j) p[j] = j;
    rng.shuffle(p);
  }
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    std::vector<Split> split(cfg.per_class, Split::test);
    for (std::size_t j = 0; j < n_train; ++j) split[perms[k][j]] = Split::train;
    for (std::size_t j = 0; j < cfg.per_class; ++j) {
      Rng child = rng.split(k * cfg.per_class + j);
      SampleParams p;
      p.azimuth = child.uniform(0.0, cfg.azimuth_spread);
      p.jitter_sigma = cfg.jitter_sigma;
      p.speckle = cfg.speckle;
      p.clutter = cfg.clutter;
      p.seed = child.next_u64();
      const std::string path = sample_path(k, j);
      out.dataset.samples.push_back({render_sample(out.specs[k], p, cfg.size), k, split[j], path});
      out.manifest.push_back({path, k, split[j]});
    }
  }
  return out;
}

/// Noise-free rendering of a class at azimuth 0.
inline Tensor class_template(const ClassSpec& spec, std::size_t size) {
  SampleParams p;
  p.speckle = false;
  p.jitter_sigma = 0.0;
  return render_sample(spec, p, size);
}

}  // namespace dilhyfs::data
