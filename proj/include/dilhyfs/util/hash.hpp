#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace dilhyfs::util {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Incremental FNV-1a over typed values; used to fingerprint streams and configs.
class Hasher {
 public:
  Hasher& bytes(std::string_view b) {
    h_ = fnv1a(b, h_);
    return *this;
  }
  Hasher& u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    return bytes({b, 8});
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const { return hex64(h_); }

 private:
  std::uint64_t h_ = kFnvOffset;
};

}  // namespace dilhyfs::util
