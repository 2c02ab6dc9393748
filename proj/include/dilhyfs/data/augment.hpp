#pragma once

#include <algorithm>
#include <cstddef>

#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"

namespace dilhyfs::data {

/// Mirrors the last (column) axis.
inline Tensor hflip(const Tensor& x) {
  Tensor y = x;
  const std::size_t w = x.shape().back();
  for (std::size_t r = 0; r < y.size() / w; ++r) {
    std::reverse(y.data() + r * w, y.data() + (r + 1) * w);
  }
  return y;
}

/// Mirrors columns with probability p. Always consumes exactly one uniform draw.
inline Tensor hflip_augment(const Tensor& x, Rng& rng, double p = 0.5) {
  const bool flip = rng.uniform() < p;
  return flip ? hflip(x) : x;
}

}  // namespace dilhyfs::data
