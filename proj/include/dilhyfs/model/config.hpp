#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/spectral/fft.hpp"

namespace dilhyfs::model {

struct ModelConfig {
  std::size_t input_size = 32;
  std::vector<std::size_t> stage_dims{16, 32, 64, 128};
  std::vector<std::size_t> spectral_blocks{2, 2, 2, 2};
  std::vector<std::size_t> spatial_blocks{2, 2, 2, 2};
  std::size_t mlp_ratio = 2;
  double filter_init_std = 0.02;

  /// Full-size channel and block layout.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.stage_dims = {64, 128, 256, 512};
    c.spectral_blocks = {3, 3, 10, 3};
    c.spatial_blocks = {2, 2, 2, 2};
    return c;
  }

  std::size_t num_stages() const { return stage_dims.size(); }
  std::size_t feature_dim() const { return stage_dims.back(); }
  std::size_t stage_resolution(std::size_t s) const { return input_size >> s; }

  void validate() const {
    if (stage_dims.size() != 4) throw ConfigError("model: stage_dims must list 4 stages");
    if (spectral_blocks.size() != stage_dims.size() || spatial_blocks.size() != stage_dims.size()) {
      throw ConfigError("model: stage_dims, spectral_blocks and spatial_blocks must have equal length");
    }
    for (std::size_t d : stage_dims) {
      if (d == 0) throw ConfigError("model: stage dimensions must be positive");
    }
    for (std::size_t i = 0; i < stage_dims.size(); ++i) {
      if (spectral_blocks[i] == 0 || spatial_blocks[i] == 0) {
        throw ConfigError("model: every stage needs at least one block per branch");
      }
    }
    if (!spectral::is_power_of_two(input_size)) {
      throw ConfigError("model: input_size " + std::to_string(input_size) + " is not a power of two");
    }
    if ((input_size >> (stage_dims.size() - 1)) == 0) {
      throw ConfigError("model: input_size too small for " + std::to_string(stage_dims.size()) +
                        " halvings");
    }
    if (mlp_ratio == 0) throw ConfigError("model: mlp_ratio must be positive");
    if (!(filter_init_std >= 0.0)) throw ConfigError("model: filter_init_std must be >= 0");
  }
};

}  // namespace dilhyfs::model
