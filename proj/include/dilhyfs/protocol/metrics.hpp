#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>

#include "dilhyfs/core/error.hpp"

namespace dilhyfs::protocol {

/// Mean of the per-task accuracies A_0..A_T, base task included.
inline double average_incremental_accuracy(std::span<const double> acc) {
  if (acc.empty()) throw DimensionError("metrics: no task accuracies");
  return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
}

/// A_0 - A_T.
inline double performance_drop(std::span<const double> acc) {
  if (acc.empty()) throw DimensionError("metrics: no task accuracies");
  return acc.front() - acc.back();
}

inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw DataError("accuracy: empty evaluation set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace dilhyfs::protocol
