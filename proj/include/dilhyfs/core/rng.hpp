#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "dilhyfs/core/tensor.hpp"

namespace dilhyfs {

/// One SplitMix64 output for the given state (the state is advanced first).
constexpr std::uint64_t splitmix64(std::uint64_t state) noexcept {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// SplitMix64 generator.
///
/// uniform() maps the top 53 bits of a draw to [0, 1). normal() is Box-Muller over two
/// consecutive uniforms (u1 taken as 1 - uniform so it lies in (0, 1]); each pair yields
/// the cosine variate first and caches the sine variate for the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    const std::uint64_t out = splitmix64(state_);
    state_ += 0x9E3779B97F4A7C15ULL;
    return out;
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Multiply-shift; n must be > 0.
  std::size_t below(std::size_t n) noexcept {
    const auto wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  double normal() noexcept {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  /// Exponential variate with mean 1.
  double exponential() noexcept { return -std::log(1.0 - uniform()); }

  /// Independent child stream: seed = splitmix(state xor index).
  Rng split(std::uint64_t index) const noexcept { return Rng(splitmix64(state_ ^ index)); }

  std::uint64_t state() const noexcept { return state_; }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

/// Tensor of i.i.d. standard normal draws.
inline Tensor rng_normal(Rng& rng, Shape shape, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace dilhyfs
