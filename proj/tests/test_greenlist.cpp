#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lbw/greenlist.hpp"
#include "lbw/rng.hpp"

using namespace lbw;

namespace {

GreenListPool pool_from_rows(const std::vector<std::vector<int>>& rows, double gamma,
                             uint64_t codebook_id = 0) {
  const auto n = static_cast<uint32_t>(rows.size());
  const auto v = static_cast<uint32_t>(rows[0].size());
  const std::size_t stride = (v + 7) / 8;
  std::vector<uint8_t> packed(n * stride, 0);
  uint32_t green = 0;
  for (uint32_t i = 0; i < n; ++i) {
    green = 0;
    for (uint32_t j = 0; j < v; ++j)
      if (rows[i][j]) {
        packed[i * stride + (j >> 3)] |= static_cast<uint8_t>(1u << (j & 7));
        ++green;
      }
  }
  return GreenListPool(std::move(packed), n, v, gamma, green, codebook_id);
}

// Gale-Ryser feasibility of a 0-1 matrix with the given margins.
bool margins_feasible(std::vector<int> row_sums, std::vector<int> col_sums) {
  if (std::accumulate(row_sums.begin(), row_sums.end(), 0) !=
      std::accumulate(col_sums.begin(), col_sums.end(), 0))
    return false;
  std::sort(col_sums.rbegin(), col_sums.rend());
  for (std::size_t k = 1; k <= col_sums.size(); ++k) {
    long lhs = 0;
    for (std::size_t i = 0; i < k; ++i) lhs += col_sums[i];
    long rhs = 0;
    for (int r : row_sums) rhs += std::min<long>(r, static_cast<long>(k));
    if (lhs > rhs) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("single row has exact green size, column constraint vacuous") {
  const auto pool = generate_green_matrix(1, 0.5, 8, 0);
  CHECK(pool.green_size() == 4);
  CHECK(pool.green_indices(0).size() == 4);
  const auto report = validate_pool(pool);
  CHECK(report.row_ok);
}

TEST_CASE("gamma 1 gives the all-ones matrix, already converged") {
  std::vector<double> trace;
  const auto pool = generate_green_matrix(3, 1.0, 6, 9, 1000, 0, &trace);
  CHECK(pool.green_size() == 6);
  for (uint32_t i = 0; i < 3; ++i)
    for (uint32_t j = 0; j < 6; ++j) CHECK(pool.is_green(i, j));
  const auto report = validate_pool(pool);
  CHECK(report.row_ok);
  CHECK(report.max_col_dev == 0.0);
  CHECK(trace.front() == 0.0);
}

TEST_CASE("integral threshold reaches exact balance when margins are feasible") {
  // N=4, gamma=0.5, V=8: row sums 4, target column sums 2.
  REQUIRE(margins_feasible(std::vector<int>(4, 4), std::vector<int>(8, 2)));
  std::vector<double> trace;
  const auto pool = generate_green_matrix(4, 0.5, 8, 0, 1000, 0, &trace);
  const auto report = validate_pool(pool);
  CHECK(report.row_ok);
  CHECK(report.max_col_dev == 0.0);
  // Every column ended at exactly 2.
  CHECK(report.col_histogram[2] == 8);
}

TEST_CASE("fairness at convergence holds across seeds for integral thresholds") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const auto pool = generate_green_matrix(10, 0.2, 40, seed);
    CHECK(validate_pool(pool).max_col_dev == 0.0);  // theta = 2 exactly
  }
}

TEST_CASE("repair deviation is non-increasing across sweeps") {
  for (uint64_t seed : {0ull, 1ull, 2ull, 3ull}) {
    std::vector<double> trace;
    generate_green_matrix(32, 0.1, 1024, seed, 1000, 0, &trace);
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  }
}

TEST_CASE("row sums hold at every sweep") {
  // Stopping after k sweeps exposes the intermediate states; the pool
  // constructor rejects any row whose sum drifted from green_size.
  for (int k = 1; k <= 5; ++k)
    CHECK_NOTHROW(generate_green_matrix(16, 0.3, 64, 5, k));
}

TEST_CASE("generator rejects bad arguments") {
  CHECK_THROWS_AS(generate_green_matrix(4, 0.001, 10, 0), invalid_argument);  // rounds to 0
  CHECK_THROWS_AS(generate_green_matrix(0, 0.5, 10, 0), invalid_argument);
  CHECK_THROWS_AS(generate_green_matrix(4, 1.5, 10, 0), invalid_argument);
  CHECK_THROWS_AS(generate_green_matrix(4, 0.5, 1, 0), invalid_argument);
}

TEST_CASE("validate_pool on hand-built matrices") {
  const auto all_ones = pool_from_rows({{1, 1, 1}, {1, 1, 1}}, 1.0);
  auto report = validate_pool(all_ones);
  CHECK(report.row_ok);
  CHECK(report.max_col_dev == 0.0);

  const auto split = pool_from_rows({{1, 1, 0, 0}, {0, 0, 1, 1}}, 0.5);
  report = validate_pool(split);
  CHECK(report.row_ok);
  CHECK(report.max_col_dev == 0.0);
  CHECK(report.col_histogram[1] == 4);
}

TEST_CASE("reference pool stays within the documented deviation") {
  const auto pool = generate_green_matrix(32, 0.1, 1024, 0);
  CHECK(pool.green_size() == 102);
  CHECK(pool.gamma_eff() == doctest::Approx(102.0 / 1024.0));
  const auto report = validate_pool(pool);
  CHECK(report.row_ok);
  CHECK(report.max_col_dev <= 2.0);
}

TEST_CASE("nearest_green identity and simple geometry") {
  const Codebook cb({0.0f, 0.0f, 0.1f, 0.0f, 5.0f, 5.0f}, 3, 2);
  const auto pool = pool_from_rows({{0, 1, 1}}, 2.0 / 3.0, cb.id());
  CHECK(nearest_green(cb, pool, 0, 1) == 1);  // already green
  CHECK(nearest_green(cb, pool, 0, 2) == 2);
  CHECK(nearest_green(cb, pool, 0, 0) == 1);  // nearest green neighbour
  CHECK_THROWS_AS(nearest_green(cb, pool, 1, 0), invalid_argument);
  CHECK_THROWS_AS(nearest_green(cb, pool, 0, 3), invalid_argument);
}

TEST_CASE("nearest_green matches the exhaustive oracle for every token") {
  Rng rng(31);
  std::vector<float> rows(64 * 6);
  for (auto& v : rows) v = static_cast<float>(rng.uniform01());
  const Codebook cb(rows, 64, 6);
  const auto pool = generate_green_matrix(4, 0.25, 64, 8, 1000, cb.id());

  for (uint32_t list = 0; list < 4; ++list)
    for (uint32_t token = 0; token < 64; ++token) {
      const uint32_t got = nearest_green(cb, pool, list, token);
      uint32_t best = UINT32_MAX;
      double best_d = 1e300;
      if (pool.is_green(list, token)) {
        best = token;
      } else {
        for (uint32_t g = 0; g < 64; ++g) {
          if (!pool.is_green(list, g)) continue;
          double d = 0.0;
          for (int k = 0; k < 6; ++k)
            d += (cb.row(g)[k] - cb.row(token)[k]) * (cb.row(g)[k] - cb.row(token)[k]);
          if (d < best_d) {
            best_d = d;
            best = g;
          }
        }
      }
      CHECK(got == best);
      // Idempotence: substituting twice changes nothing.
      CHECK(nearest_green(cb, pool, list, got) == got);
    }
}

TEST_CASE("pool persistence round trip is byte-exact") {
  const auto pool = generate_green_matrix(8, 0.25, 100, 4, 1000, 0xfeedu);
  std::stringstream buf1, buf2;
  save_pool(pool, buf1);
  const auto loaded = load_pool(buf1);
  CHECK(loaded.pool_id() == pool.pool_id());
  CHECK(loaded.packed() == pool.packed());
  CHECK(loaded.gamma() == pool.gamma());
  CHECK(loaded.codebook_id() == pool.codebook_id());
  save_pool(loaded, buf2);
  CHECK(buf1.str() == buf2.str());
}

TEST_CASE("pool file size follows the format") {
  const auto pool = generate_green_matrix(32, 0.1, 1024, 0);
  std::stringstream buf;
  save_pool(pool, buf);
  // magic(4) + version(2) + N(4) + V(4) + gamma(8) + green_size(4) +
  // codebook fp(8) + rows N*ceil(V/8) + pool fp(8)
  CHECK(buf.str().size() == 34 + 32 * 128 + 8);
}

TEST_CASE("pool loader rejects corruption") {
  const auto pool = generate_green_matrix(4, 0.5, 16, 2);
  std::stringstream buf;
  save_pool(pool, buf);
  std::string bytes = buf.str();

  SUBCASE("bad magic") {
    bytes[2] = 'x';
    std::stringstream in(bytes);
    CHECK_THROWS_AS(load_pool(in), format_error);
  }
  SUBCASE("truncation") {
    std::stringstream in(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_pool(in), format_error);
  }
  SUBCASE("flipped matrix bit breaks the fingerprint") {
    bytes[34] = static_cast<char>(bytes[34] ^ 1);
    std::stringstream in(bytes);
    CHECK_THROWS_AS(load_pool(in), format_error);
  }
}

TEST_CASE("multi-list pools hide the green assignment frequency") {
  const auto pool32 = generate_green_matrix(32, 0.1, 1024, 0);
  const auto pool1 = generate_green_matrix(1, 0.1, 1024, 0);

  const auto cov = [](const GreenListPool& pool, uint64_t seed) {
    const std::size_t maps = 10000;
    std::vector<double> freq(pool.vocab_size(), 0.0);
    Rng rng(seed);
    for (std::size_t m = 0; m < maps; ++m) {
      const auto list = static_cast<uint32_t>(rng.uniform_below(pool.list_count()));
      for (uint32_t v = 0; v < pool.vocab_size(); ++v)
        freq[v] += pool.is_green(list, v);
    }
    double mean = 0.0;
    for (double f : freq) mean += f / maps;
    mean /= freq.size();
    double var = 0.0;
    for (double f : freq) var += (f / maps - mean) * (f / maps - mean);
    var /= freq.size();
    return std::sqrt(var) / mean;
  };

  const double cov32 = cov(pool32, 77);
  const double cov1 = cov(pool1, 78);
  CHECK(cov1 >= 5.0 * cov32);
}
