#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/util/fs.hpp"

namespace dilhyfs::data {

/// Decodes a binary 8-bit PGM ("P5", maxval 255) into [rows x cols] values in [0, 1].
inline Tensor decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* field) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1u << 20) throw FormatError(std::string("pgm: ") + field + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("pgm: expected ") + field, start);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("pgm: bad magic (expected P5)", 0);
  }
  pos = 2;
  const std::size_t width = read_uint("width");
  const std::size_t height = read_uint("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) {
    throw FormatError("pgm: maxval " + std::to_string(maxval) + " unsupported (need 255)", maxval_at);
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pgm: missing separator before raster", pos);
  }
  ++pos;
  if (width == 0 || height == 0) throw FormatError("pgm: empty raster", pos);
  const std::size_t need = width * height;
  if (bytes.size() - pos < need) {
    throw FormatError("pgm: raster truncated (" + std::to_string(bytes.size() - pos) + " of " +
                          std::to_string(need) + " bytes)",
                      bytes.size());
  }
  Tensor out({height, width});
  for (std::size_t i = 0; i < need; ++i) {
    out[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  return out;
}

/// Centers `img` [rows x cols] in a size x size window, cropping or zero-padding each axis.
inline Tensor center_fit(const Tensor& img, std::size_t size) {
  const std::size_t rows = img.dim(0), cols = img.dim(1);
  Tensor out({size, size});
  for (std::size_t r = 0; r < size; ++r) {
    // Offsets may be negative (padding) or positive (cropping).
    const long sr = static_cast<long>(r) + (static_cast<long>(rows) - static_cast<long>(size)) / 2;
    if (sr < 0 || sr >= static_cast<long>(rows)) continue;
    for (std::size_t c = 0; c < size; ++c) {
      const long sc = static_cast<long>(c) + (static_cast<long>(cols) - static_cast<long>(size)) / 2;
      if (sc < 0 || sc >= static_cast<long>(cols)) continue;
      out.at(r, c) = img.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
    }
  }
  return out;
}

/// Loads a P5 file as a [1 x size x size] image.
inline Tensor load_pgm(const std::filesystem::path& path, std::size_t size) {
  return center_fit(decode_pgm(util::read_file(path)), size).reshaped({1, size, size});
}

/// Quantizes [.. x rows x cols] values in [0, 1] to an 8-bit P5 file (atomic write).
inline std::string encode_pgm(const Tensor& img) {
  const std::size_t cols = img.shape().back();
  const std::size_t rows = img.shape()[img.rank() - 2];
  if (img.size() != rows * cols) throw DimensionError("pgm: expected a single-channel image");
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (double v : img.values()) {
    const double c = std::min(1.0, std::max(0.0, v));
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Tensor& img) {
  util::atomic_write(path, encode_pgm(img));
}

}  // namespace dilhyfs::data
