#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "lbw/common.hpp"

// Little-endian primitives shared by the binary file formats.

namespace lbw::detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  put_bytes(out, b, 2);
}

inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 8);
}

inline void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void get_bytes(std::istream& in, void* p, std::size_t n, uint64_t offset,
                      const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw format_error(std::string(what) + ": truncated",
                       offset + static_cast<uint64_t>(in.gcount()));
}

inline uint16_t get_u16(std::istream& in, uint64_t offset, const char* what) {
  unsigned char b[2];
  get_bytes(in, b, 2, offset, what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& in, uint64_t offset, const char* what) {
  unsigned char b[4];
  get_bytes(in, b, 4, offset, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& in, uint64_t offset, const char* what) {
  unsigned char b[8];
  get_bytes(in, b, 8, offset, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& in, uint64_t offset, const char* what) {
  const uint32_t bits = get_u32(in, offset, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& in, uint64_t offset, const char* what) {
  const uint64_t bits = get_u64(in, offset, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

// Fingerprint helpers mirroring the on-disk little-endian layout.
inline void hash_u32(Fnv1a& h, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  h.update(b, 4);
}

inline void hash_u64(Fnv1a& h, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  h.update(b, 8);
}

inline void hash_f32(Fnv1a& h, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  hash_u32(h, bits);
}

inline void hash_f64(Fnv1a& h, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  hash_u64(h, bits);
}

}  // namespace lbw::detail
