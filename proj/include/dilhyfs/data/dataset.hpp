#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"

namespace dilhyfs::data {

enum class Split { train, test };

inline std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

struct Sample {
  Tensor image;  // [1 x S x S], values in [0, 1]
  std::size_t label = 0;
  Split split = Split::train;
  std::string path;  // empty for in-memory samples
};

/// Labeled images from one source ("domain"); labels are 0..num_classes-1.
struct Dataset {
  std::string domain = "synthetic";
  std::size_t num_classes = 0;
  std::size_t image_size = 0;
  std::vector<Sample> samples;

  std::vector<std::size_t> indices(std::size_t label, Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].label == label && samples[i].split == split) out.push_back(i);
    }
    return out;
  }

  std::size_t count(Split split) const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.split == split ? 1 : 0;
    return n;
  }
};

}  // namespace dilhyfs::data
