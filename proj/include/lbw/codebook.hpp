#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lbw/common.hpp"

namespace lbw {

// Flat collection of equal-length feature vectors used to fit a codebook.
struct PatchCorpus {
  std::vector<double> data;  // count * dim, row-major
  int dim = 0;
  std::size_t source_count = 0;  // images the patches came from

  std::size_t size() const { return dim > 0 ? data.size() / dim : 0; }
  std::span<const double> patch(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  void push(std::span<const double> v);
};

// Immutable vector lookup table. Rows are stored as binary32, exactly the
// payload of the on-disk format; id fingerprints (vocab, dim, row bytes).
class Codebook {
 public:
  Codebook(std::vector<float> vectors, uint32_t vocab, uint32_t dim);

  uint32_t vocab_size() const { return vocab_; }
  uint32_t dim() const { return dim_; }
  uint64_t id() const { return id_; }

  std::span<const float> row(uint32_t idx) const {
    return {vec_.data() + static_cast<std::size_t>(idx) * dim_, dim_};
  }
  const std::vector<float>& raw() const { return vec_; }

  // First `vocab` rows as a standalone codebook (fresh id).
  Codebook prefix(uint32_t vocab) const;

 private:
  std::vector<float> vec_;
  uint32_t vocab_ = 0;
  uint32_t dim_ = 0;
  uint64_t id_ = 0;
};

// Index of the row closest to v in Euclidean distance, lowest index on ties.
// Distances are accumulated in double over squared terms.
uint32_t nearest_code(const Codebook& cb, std::span<const double> v);

// Row idx, bounds-checked.
std::span<const float> lookup(const Codebook& cb, uint32_t idx);

// Lloyd's k-means with k-means++ seeding. Deterministic for a fixed
// (corpus, vocab, max_iters, seed); stops when assignments are stable or
// max_iters is reached. Empty clusters are reseeded from the point farthest
// from its assigned centroid. Rows of the result are shuffled once so that
// any prefix is an unbiased subset. final_sse, when given, receives the
// ending sum of squared distances.
Codebook train_codebook(const PatchCorpus& corpus, uint32_t vocab, int max_iters,
                        uint64_t seed, double* final_sse = nullptr,
                        std::vector<double>* sse_trace = nullptr);

void save_codebook(const Codebook& cb, std::ostream& out);
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(std::istream& in);
Codebook load_codebook(const std::string& path);

}  // namespace lbw
