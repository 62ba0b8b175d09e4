#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lbw {

// Bad caller input: dimension mismatch, out-of-range index, invalid parameter.
class invalid_argument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file. Carries the byte offset that failed.
class format_error : public std::runtime_error {
 public:
  format_error(const std::string& what, uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  uint64_t offset() const noexcept { return offset_; }

 private:
  uint64_t offset_;
};

// 64-bit FNV-1a over raw bytes; used for content fingerprints in file formats.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ull;
    }
  }

  uint64_t digest() const noexcept { return hash_; }

 private:
  uint64_t hash_ = 0xcbf29ce484222325ull;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream index.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace lbw
