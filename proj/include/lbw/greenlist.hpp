#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lbw/codebook.hpp"

namespace lbw {

struct PoolReport {
  bool row_ok = false;
  double max_col_dev = 0.0;
  std::vector<std::size_t> col_histogram;  // index = column sum, 0..N
};

// N green lists over a vocabulary of size V, stored as a packed binary
// matrix (row stride ceil(V/8), LSB-first). Row i is the green set G_i; the
// red set R_i is its complement. Immutable once built.
class GreenListPool {
 public:
  GreenListPool(std::vector<uint8_t> packed_rows, uint32_t n_lists, uint32_t vocab,
                double gamma, uint32_t green_size, uint64_t codebook_id);

  uint32_t list_count() const { return n_; }
  uint32_t vocab_size() const { return v_; }
  double gamma() const { return gamma_; }
  uint32_t green_size() const { return green_size_; }
  // True null proportion green_size / V; detection must use this, not the
  // nominal gamma, because round(gamma*V) need not hit gamma exactly.
  double gamma_eff() const { return static_cast<double>(green_size_) / v_; }
  uint64_t codebook_id() const { return codebook_id_; }
  uint64_t pool_id() const { return pool_id_; }
  std::size_t row_stride() const { return (static_cast<std::size_t>(v_) + 7) / 8; }

  bool is_green(uint32_t list, uint32_t token) const {
    return (packed_[list * row_stride() + (token >> 3)] >> (token & 7)) & 1u;
  }
  const std::vector<uint32_t>& green_indices(uint32_t list) const {
    return greens_[list];
  }
  const std::vector<uint8_t>& packed() const { return packed_; }

 private:
  std::vector<uint8_t> packed_;
  std::vector<std::vector<uint32_t>> greens_;
  uint32_t n_ = 0;
  uint32_t v_ = 0;
  double gamma_ = 0.0;
  uint32_t green_size_ = 0;
  uint64_t codebook_id_ = 0;
  uint64_t pool_id_ = 0;
};

// Random rows with exact row sums round(gamma*V), then iterative swap repair
// of the column sums against the threshold gamma*N. Each swap trades a 1 in
// an over-frequent column for a 0 in an under-frequent column of the same
// row, most deviant columns first, so row sums hold at every step. Stops
// when a full sweep changes nothing, when every column sum is strictly
// within one unit of the threshold, or at max_iters sweeps. Deterministic
// for a fixed seed. sweep_max_dev, when given, receives the max column
// deviation before repair and after each sweep.
GreenListPool generate_green_matrix(uint32_t n_lists, double gamma, uint32_t vocab,
                                    uint64_t seed, int max_iters = 1000,
                                    uint64_t codebook_id = 0,
                                    std::vector<double>* sweep_max_dev = nullptr);

PoolReport validate_pool(const GreenListPool& pool);

// The green token nearest to `token` in code space (the token itself when
// already green); ties broken toward the lowest index.
uint32_t nearest_green(const Codebook& cb, const GreenListPool& pool, uint32_t list_id,
                       uint32_t token);

void save_pool(const GreenListPool& pool, std::ostream& out);
void save_pool(const GreenListPool& pool, const std::string& path);
GreenListPool load_pool(std::istream& in);
GreenListPool load_pool(const std::string& path);

}  // namespace lbw
