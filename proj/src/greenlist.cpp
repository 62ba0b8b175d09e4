#include "lbw/greenlist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lbw/detail/binio.hpp"
#include "lbw/rng.hpp"

namespace lbw {

namespace {

constexpr char kMagic[4] = {'L', 'B', 'W', 'G'};
constexpr uint16_t kVersion = 1;

uint64_t fingerprint(uint32_t n, uint32_t v, double gamma, uint32_t green_size,
                     uint64_t codebook_id, const std::vector<uint8_t>& rows) {
  Fnv1a h;
  detail::hash_u32(h, n);
  detail::hash_u32(h, v);
  detail::hash_f64(h, gamma);
  detail::hash_u32(h, green_size);
  detail::hash_u64(h, codebook_id);
  h.update(rows.data(), rows.size());
  return h.digest();
}

}  // namespace

GreenListPool::GreenListPool(std::vector<uint8_t> packed_rows, uint32_t n_lists,
                             uint32_t vocab, double gamma, uint32_t green_size,
                             uint64_t codebook_id)
    : packed_(std::move(packed_rows)), n_(n_lists), v_(vocab), gamma_(gamma),
      green_size_(green_size), codebook_id_(codebook_id) {
  if (n_ < 1 || v_ < 2) throw invalid_argument("GreenListPool: need N >= 1, V >= 2");
  if (!(gamma_ > 0.0) || gamma_ > 1.0)
    throw invalid_argument("GreenListPool: gamma must be in (0, 1]");
  if (green_size_ < 1 || green_size_ > v_)
    throw invalid_argument("GreenListPool: green size out of range");
  if (packed_.size() != static_cast<std::size_t>(n_) * row_stride())
    throw invalid_argument("GreenListPool: packed size mismatch");
  greens_.resize(n_);
  for (uint32_t i = 0; i < n_; ++i) {
    auto& g = greens_[i];
    g.reserve(green_size_);
    for (uint32_t j = 0; j < v_; ++j)
      if (is_green(i, j)) g.push_back(j);
    if (g.size() != green_size_)
      throw invalid_argument("GreenListPool: row sum differs from green size");
  }
  pool_id_ = fingerprint(n_, v_, gamma_, green_size_, codebook_id_, packed_);
}

GreenListPool generate_green_matrix(uint32_t n_lists, double gamma, uint32_t vocab,
                                    uint64_t seed, int max_iters, uint64_t codebook_id,
                                    std::vector<double>* sweep_max_dev) {
  if (n_lists < 1) throw invalid_argument("generate_green_matrix: N must be >= 1");
  if (vocab < 2) throw invalid_argument("generate_green_matrix: V must be >= 2");
  if (!(gamma > 0.0) || gamma > 1.0)
    throw invalid_argument("generate_green_matrix: gamma must be in (0, 1]");
  const auto green_size = static_cast<uint32_t>(std::lround(gamma * vocab));
  if (green_size < 1)
    throw invalid_argument("generate_green_matrix: round(gamma*V) must be >= 1");
  if (max_iters < 1) throw invalid_argument("generate_green_matrix: max_iters must be >= 1");

  const std::size_t n = n_lists, v = vocab;
  Rng rng(seed);

  // Dense working matrix; rows start as a uniform sample of green_size columns.
  std::vector<uint8_t> m(n * v, 0);
  std::vector<uint32_t> cols(v);
  for (uint32_t j = 0; j < vocab; ++j) cols[j] = j;
  for (std::size_t i = 0; i < n; ++i) {
    rng.shuffle(cols);
    for (uint32_t k = 0; k < green_size; ++k) m[i * v + cols[k]] = 1;
  }

  std::vector<int64_t> colsum(v, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < v; ++j) colsum[j] += m[i * v + j];

  const double theta = gamma * static_cast<double>(n_lists);
  const auto max_dev = [&] {
    double dev = 0.0;
    for (std::size_t j = 0; j < v; ++j)
      dev = std::max(dev, std::abs(static_cast<double>(colsum[j]) - theta));
    return dev;
  };
  if (sweep_max_dev) sweep_max_dev->push_back(max_dev());

  std::vector<uint32_t> one_to_zero, zero_to_one;
  for (int sweep = 0; sweep < max_iters; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      one_to_zero.clear();
      zero_to_one.clear();
      for (std::size_t j = 0; j < v; ++j) {
        const double f = static_cast<double>(colsum[j]);
        if (f > theta && m[i * v + j] == 1)
          one_to_zero.push_back(static_cast<uint32_t>(j));
        else if (f < theta && m[i * v + j] == 0)
          zero_to_one.push_back(static_cast<uint32_t>(j));
      }
      // Pair the most deviant columns first; index-order pairing starves
      // high-index columns and stalls the repair. Stable sort on lists built
      // in ascending index order keeps runs reproducible.
      std::stable_sort(one_to_zero.begin(), one_to_zero.end(),
                       [&](uint32_t a, uint32_t b) { return colsum[a] > colsum[b]; });
      std::stable_sort(zero_to_one.begin(), zero_to_one.end(),
                       [&](uint32_t a, uint32_t b) { return colsum[a] < colsum[b]; });
      const std::size_t pairs = std::min(one_to_zero.size(), zero_to_one.size());
      for (std::size_t k = 0; k < pairs; ++k) {
        m[i * v + zero_to_one[k]] = 1;
        ++colsum[zero_to_one[k]];
        m[i * v + one_to_zero[k]] = 0;
        --colsum[one_to_zero[k]];
      }
      changed = changed || pairs > 0;
    }
    const double dev = max_dev();
    if (sweep_max_dev) sweep_max_dev->push_back(dev);
    // dev < 1 is as balanced as integer column sums can get (and means exact
    // balance when theta is integral), so further sweeps cannot improve.
    if (!changed || dev < 1.0) break;
  }

  const std::size_t stride = (v + 7) / 8;
  std::vector<uint8_t> packed(n * stride, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < v; ++j)
      if (m[i * v + j]) packed[i * stride + (j >> 3)] |= static_cast<uint8_t>(1u << (j & 7));

  return GreenListPool(std::move(packed), n_lists, vocab, gamma, green_size, codebook_id);
}

PoolReport validate_pool(const GreenListPool& pool) {
  PoolReport report;
  report.row_ok = true;
  const uint32_t n = pool.list_count(), v = pool.vocab_size();
  std::vector<int64_t> colsum(v, 0);
  for (uint32_t i = 0; i < n; ++i) {
    std::size_t row_sum = 0;
    for (uint32_t j = 0; j < v; ++j) {
      if (pool.is_green(i, j)) {
        ++row_sum;
        ++colsum[j];
      }
    }
    if (row_sum != pool.green_size()) report.row_ok = false;
  }
  const double theta = pool.gamma() * static_cast<double>(n);
  report.col_histogram.assign(n + 1, 0);
  for (uint32_t j = 0; j < v; ++j) {
    report.max_col_dev =
        std::max(report.max_col_dev, std::abs(static_cast<double>(colsum[j]) - theta));
    ++report.col_histogram[static_cast<std::size_t>(colsum[j])];
  }
  return report;
}

uint32_t nearest_green(const Codebook& cb, const GreenListPool& pool, uint32_t list_id,
                       uint32_t token) {
  if (list_id >= pool.list_count())
    throw invalid_argument("nearest_green: list id out of range");
  if (token >= pool.vocab_size())
    throw invalid_argument("nearest_green: token out of range");
  if (pool.vocab_size() != cb.vocab_size())
    throw invalid_argument("nearest_green: pool and codebook vocab differ");
  if (pool.codebook_id() != 0 && pool.codebook_id() != cb.id())
    throw invalid_argument("nearest_green: pool bound to a different codebook");
  if (pool.is_green(list_id, token)) return token;

  const auto query = cb.row(token);
  uint32_t best = pool.green_indices(list_id).front();
  double best_d = std::numeric_limits<double>::infinity();
  for (uint32_t g : pool.green_indices(list_id)) {
    const auto row = cb.row(g);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double d = static_cast<double>(row[k]) - static_cast<double>(query[k]);
      acc += d * d;
      if (acc >= best_d) break;
    }
    if (acc < best_d) {
      best_d = acc;
      best = g;
    }
  }
  return best;
}

void save_pool(const GreenListPool& pool, std::ostream& out) {
  detail::put_bytes(out, kMagic, 4);
  detail::put_u16(out, kVersion);
  detail::put_u32(out, pool.list_count());
  detail::put_u32(out, pool.vocab_size());
  detail::put_f64(out, pool.gamma());
  detail::put_u32(out, pool.green_size());
  detail::put_u64(out, pool.codebook_id());
  detail::put_bytes(out, pool.packed().data(), pool.packed().size());
  detail::put_u64(out, pool.pool_id());
}

void save_pool(const GreenListPool& pool, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw invalid_argument("cannot open pool file for writing: " + path);
  save_pool(pool, out);
  if (!out) throw std::runtime_error("pool write failed: " + path);
}

GreenListPool load_pool(std::istream& in) {
  char magic[4];
  detail::get_bytes(in, magic, 4, 0, "pool");
  if (!std::equal(magic, magic + 4, kMagic)) throw format_error("pool: bad magic", 0);
  const uint16_t version = detail::get_u16(in, 4, "pool");
  if (version != kVersion) throw format_error("pool: unsupported version", 4);
  const uint32_t n = detail::get_u32(in, 6, "pool");
  const uint32_t v = detail::get_u32(in, 10, "pool");
  const double gamma = detail::get_f64(in, 14, "pool");
  const uint32_t green_size = detail::get_u32(in, 22, "pool");
  const uint64_t cb_id = detail::get_u64(in, 26, "pool");
  if (n < 1 || v < 2 || static_cast<uint64_t>(n) * v > (1ull << 32))
    throw format_error("pool: implausible dimensions", 6);
  const std::size_t stride = (static_cast<std::size_t>(v) + 7) / 8;
  std::vector<uint8_t> rows(static_cast<std::size_t>(n) * stride);
  detail::get_bytes(in, rows.data(), rows.size(), 34, "pool");
  const uint64_t rows_end = 34 + static_cast<uint64_t>(rows.size());
  const uint64_t stored = detail::get_u64(in, rows_end, "pool");
  if (stored != fingerprint(n, v, gamma, green_size, cb_id, rows))
    throw format_error("pool: fingerprint mismatch", rows_end);
  try {
    return GreenListPool(std::move(rows), n, v, gamma, green_size, cb_id);
  } catch (const invalid_argument& e) {
    throw format_error(std::string("pool: inconsistent contents: ") + e.what(), 6);
  }
}

GreenListPool load_pool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_argument("cannot open pool file: " + path);
  return load_pool(in);
}

}  // namespace lbw
