#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/util/fs.hpp"

namespace dilhyfs::io {

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
  bool frozen = false;
};

inline constexpr const char* kCheckpointMagic = "DILHYFS-CKPT 1";

/// Serializes tensors as
///
///   DILHYFS-CKPT 1
///   tensors <N>
///   <name> <trainable 0|1> <frozen 0|1> <ndim> <d0> <d1> ...     (N lines)
///   end
///   <payload: all tensors' values, in header order, float64 little-endian>
inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::ostringstream head;
  head << kCheckpointMagic << "\n" << "tensors " << tensors.size() << "\n";
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
      throw DataError("checkpoint: tensor name '" + t.name + "' is empty or contains whitespace");
    }
    head << t.name << ' ' << (t.trainable ? 1 : 0) << ' ' << (t.frozen ? 1 : 0) << ' '
         << t.value.rank();
    for (std::size_t d : t.value.shape()) head << ' ' << d;
    head << "\n";
  }
  head << "end\n";
  std::string out = head.str();
  for (const auto& t : tensors) {
    for (double v : t.value.values()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.append(b, 8);
    }
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("checkpoint: truncated header", pos);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kCheckpointMagic) throw FormatError("checkpoint: bad magic", 0);
  std::size_t count = 0;
  {
    const std::size_t at = pos;
    std::istringstream ls(next_line());
    std::string word;
    if (!(ls >> word >> count) || word != "tensors") {
      throw FormatError("checkpoint: expected 'tensors <N>'", at);
    }
  }
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = pos;
    std::istringstream ls(next_line());
    NamedTensor t;
    int trainable = 0, frozen = 0;
    std::size_t ndim = 0;
    if (!(ls >> t.name >> trainable >> frozen >> ndim)) {
      throw FormatError("checkpoint: malformed tensor line", at);
    }
    Shape shape(ndim);
    for (auto& d : shape) {
      if (!(ls >> d)) throw FormatError("checkpoint: missing extent for '" + t.name + "'", at);
    }
    t.trainable = trainable != 0;
    t.frozen = frozen != 0;
    t.value = Tensor(shape);
    out.push_back(std::move(t));
  }
  if (next_line() != "end") throw FormatError("checkpoint: expected 'end'", pos);
  for (auto& t : out) {
    const std::size_t need = t.value.size() * 8;
    if (bytes.size() - pos < need) {
      throw FormatError("checkpoint: payload truncated in '" + t.name + "'", bytes.size());
    }
    for (double& v : t.value.storage()) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
      }
      v = std::bit_cast<double>(bits);
      pos += 8;
    }
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes after payload", pos);
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  util::atomic_write(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(util::read_file(path));
}

}  // namespace dilhyfs::io
