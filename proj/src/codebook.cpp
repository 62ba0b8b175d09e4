#include "lbw/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lbw/detail/binio.hpp"
#include "lbw/parallel.hpp"
#include "lbw/rng.hpp"

namespace lbw {

namespace {

constexpr char kMagic[4] = {'L', 'B', 'W', 'C'};
constexpr uint16_t kVersion = 1;

uint64_t fingerprint(uint32_t vocab, uint32_t dim, const std::vector<float>& vec) {
  Fnv1a h;
  detail::hash_u32(h, vocab);
  detail::hash_u32(h, dim);
  for (float v : vec) detail::hash_f32(h, v);
  return h.digest();
}

// Squared Euclidean distance in double, abandoning once `bound` is reached.
double dist2_bounded(std::span<const float> a, const double* b, double bound) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
    if (acc >= bound) return acc;
  }
  return acc;
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

void PatchCorpus::push(std::span<const double> v) {
  if (dim == 0) dim = static_cast<int>(v.size());
  if (static_cast<std::size_t>(dim) != v.size() || v.empty())
    throw invalid_argument("PatchCorpus: inconsistent patch length");
  data.insert(data.end(), v.begin(), v.end());
}

Codebook::Codebook(std::vector<float> vectors, uint32_t vocab, uint32_t dim)
    : vec_(std::move(vectors)), vocab_(vocab), dim_(dim) {
  if (vocab_ < 2 || dim_ < 1)
    throw invalid_argument("Codebook: vocab must be >= 2 and dim >= 1");
  if (vec_.size() != static_cast<std::size_t>(vocab_) * dim_)
    throw invalid_argument("Codebook: vector buffer does not match vocab x dim");
  for (float v : vec_)
    if (!std::isfinite(v)) throw invalid_argument("Codebook: non-finite entry");
  id_ = fingerprint(vocab_, dim_, vec_);
}

Codebook Codebook::prefix(uint32_t vocab) const {
  if (vocab < 2 || vocab > vocab_)
    throw invalid_argument("Codebook::prefix: vocab out of range");
  std::vector<float> head(vec_.begin(),
                          vec_.begin() + static_cast<std::size_t>(vocab) * dim_);
  return Codebook(std::move(head), vocab, dim_);
}

uint32_t nearest_code(const Codebook& cb, std::span<const double> v) {
  if (v.size() != cb.dim())
    throw invalid_argument("nearest_code: query dimension mismatch");
  for (double x : v)
    if (!std::isfinite(x)) throw invalid_argument("nearest_code: non-finite query");
  uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (uint32_t j = 0; j < cb.vocab_size(); ++j) {
    const double d = dist2_bounded(cb.row(j), v.data(), best_d);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

std::span<const float> lookup(const Codebook& cb, uint32_t idx) {
  if (idx >= cb.vocab_size()) throw invalid_argument("lookup: index out of range");
  return cb.row(idx);
}

Codebook train_codebook(const PatchCorpus& corpus, uint32_t vocab, int max_iters,
                        uint64_t seed, double* final_sse,
                        std::vector<double>* sse_trace) {
  const std::size_t n = corpus.size();
  const std::size_t dim = static_cast<std::size_t>(corpus.dim);
  if (vocab < 2) throw invalid_argument("train_codebook: vocab must be >= 2");
  if (n < vocab) throw invalid_argument("train_codebook: corpus smaller than vocab");
  if (max_iters < 1) throw invalid_argument("train_codebook: max_iters must be >= 1");
  for (double v : corpus.data)
    if (!std::isfinite(v)) throw invalid_argument("train_codebook: non-finite patch value");

  Rng rng(seed);
  const auto point = [&](std::size_t i) {
    return std::span<const double>(corpus.data.data() + i * dim, dim);
  };

  // k-means++ seeding.
  std::vector<double> centroids(static_cast<std::size_t>(vocab) * dim);
  const auto centroid = [&](uint32_t c) {
    return std::span<double>(centroids.data() + static_cast<std::size_t>(c) * dim, dim);
  };
  {
    const std::size_t first = rng.uniform_below(n);
    std::copy_n(point(first).data(), dim, centroid(0).data());
    std::vector<double> d2(n);
    parallel_for(n, [&](std::size_t i) { d2[i] = dist2(point(i), centroid(0)); });
    for (uint32_t c = 1; c < vocab; ++c) {
      double total = 0.0;
      for (double d : d2) total += d;
      std::size_t pick;
      if (total > 0.0) {
        const double r = rng.uniform01() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc > r) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.uniform_below(n);  // all-duplicate corpus
      }
      std::copy_n(point(pick).data(), dim, centroid(c).data());
      parallel_for(n, [&](std::size_t i) {
        const double d = dist2(point(i), centroid(c));
        if (d < d2[i]) d2[i] = d;
      });
    }
  }

  std::vector<uint32_t> assign(n, 0), prev_assign(n, UINT32_MAX);
  std::vector<double> point_d2(n, 0.0);
  double sse = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    parallel_for(n, [&](std::size_t i) {
      const auto p = point(i);
      uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (uint32_t c = 0; c < vocab; ++c) {
        const double* z = centroids.data() + static_cast<std::size_t>(c) * dim;
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = p[k] - z[k];
          acc += diff * diff;
          if (acc >= best_d) break;
        }
        if (acc < best_d) {
          best_d = acc;
          best = c;
        }
      }
      assign[i] = best;
      point_d2[i] = best_d;
    });
    sse = 0.0;
    for (double d : point_d2) sse += d;
    if (sse_trace) sse_trace->push_back(sse);

    if (assign == prev_assign) break;
    prev_assign = assign;

    std::vector<double> sums(static_cast<std::size_t>(vocab) * dim, 0.0);
    std::vector<std::size_t> counts(vocab, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      const auto p = point(i);
      for (std::size_t k = 0; k < dim; ++k) s[k] += p[k];
      ++counts[assign[i]];
    }
    for (uint32_t c = 0; c < vocab; ++c) {
      if (counts[c] == 0) continue;
      double* z = centroids.data() + static_cast<std::size_t>(c) * dim;
      const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t k = 0; k < dim; ++k) z[k] = s[k] / static_cast<double>(counts[c]);
    }
    // Reseed empty clusters from the point farthest from its centroid.
    std::vector<char> used(n, 0);
    for (uint32_t c = 0; c < vocab; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!used[i] && point_d2[i] > far_d) {
          far_d = point_d2[i];
          far = i;
        }
      }
      used[far] = 1;
      std::copy_n(point(far).data(), dim, centroid(c).data());
    }
  }
  if (final_sse) *final_sse = sse;

  // Randomized row order makes any prefix an unbiased vocabulary subset.
  std::vector<uint32_t> order(vocab);
  for (uint32_t c = 0; c < vocab; ++c) order[c] = c;
  rng.shuffle(order);
  std::vector<float> rows(static_cast<std::size_t>(vocab) * dim);
  for (uint32_t c = 0; c < vocab; ++c)
    for (std::size_t k = 0; k < dim; ++k)
      rows[static_cast<std::size_t>(c) * dim + k] =
          static_cast<float>(centroids[static_cast<std::size_t>(order[c]) * dim + k]);
  return Codebook(std::move(rows), vocab, static_cast<uint32_t>(dim));
}

void save_codebook(const Codebook& cb, std::ostream& out) {
  detail::put_bytes(out, kMagic, 4);
  detail::put_u16(out, kVersion);
  detail::put_u32(out, cb.vocab_size());
  detail::put_u32(out, cb.dim());
  for (float v : cb.raw()) detail::put_f32(out, v);
  detail::put_u64(out, cb.id());
}

void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw invalid_argument("cannot open codebook file for writing: " + path);
  save_codebook(cb, out);
  if (!out) throw std::runtime_error("codebook write failed: " + path);
}

Codebook load_codebook(std::istream& in) {
  char magic[4];
  detail::get_bytes(in, magic, 4, 0, "codebook");
  if (!std::equal(magic, magic + 4, kMagic))
    throw format_error("codebook: bad magic", 0);
  const uint16_t version = detail::get_u16(in, 4, "codebook");
  if (version != kVersion) throw format_error("codebook: unsupported version", 4);
  const uint32_t vocab = detail::get_u32(in, 6, "codebook");
  const uint32_t dim = detail::get_u32(in, 10, "codebook");
  if (vocab < 2 || dim < 1 ||
      static_cast<uint64_t>(vocab) * dim > (1ull << 28))
    throw format_error("codebook: implausible dimensions", 6);
  std::vector<float> vec(static_cast<std::size_t>(vocab) * dim);
  uint64_t offset = 14;
  for (auto& v : vec) {
    v = detail::get_f32(in, offset, "codebook");
    offset += 4;
  }
  const uint64_t stored = detail::get_u64(in, offset, "codebook");
  Codebook cb(std::move(vec), vocab, dim);
  if (stored != cb.id())
    throw format_error("codebook: fingerprint mismatch", offset);
  return cb;
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_argument("cannot open codebook file: " + path);
  return load_codebook(in);
}

}  // namespace lbw
