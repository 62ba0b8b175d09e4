#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lbw/codebook.hpp"
#include "lbw/rng.hpp"

using namespace lbw;

namespace {

PatchCorpus corpus_from(const std::vector<std::vector<double>>& rows) {
  PatchCorpus c;
  for (const auto& r : rows) c.push(r);
  c.source_count = rows.size();
  return c;
}

Codebook tiny_codebook() {
  return Codebook({0.0f, 0.0f, 1.0f, 1.0f}, 2, 2);
}

// Exhaustive argmin, independent of the library's search loop.
uint32_t brute_nearest(const Codebook& cb, std::span<const double> v) {
  uint32_t best = 0;
  double best_d = 1e300;
  for (uint32_t j = 0; j < cb.vocab_size(); ++j) {
    double d = 0.0;
    const auto row = cb.row(j);
    for (std::size_t k = 0; k < row.size(); ++k)
      d += (row[k] - v[k]) * (row[k] - v[k]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("two point clusters force the centroids") {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.0, 0.0});
  for (int i = 0; i < 10; ++i) pts.push_back({1.0, 1.0});
  const auto cb = train_codebook(corpus_from(pts), 2, 20, 0);
  // Order is unspecified; one centroid per cluster.
  const auto a = cb.row(0);
  const auto b = cb.row(1);
  const bool forward = a[0] == doctest::Approx(0.0) && b[0] == doctest::Approx(1.0);
  const bool backward = a[0] == doctest::Approx(1.0) && b[0] == doctest::Approx(0.0);
  CHECK((forward || backward));
  CHECK(a[0] == doctest::Approx(a[1]));
  CHECK(b[0] == doctest::Approx(b[1]));
}

TEST_CASE("degenerate corpus collapses both centroids") {
  std::vector<std::vector<double>> pts(8, {0.25, 0.5, 0.75});
  const auto cb = train_codebook(corpus_from(pts), 2, 10, 3);
  for (uint32_t j = 0; j < 2; ++j) {
    CHECK(cb.row(j)[0] == doctest::Approx(0.25));
    CHECK(cb.row(j)[1] == doctest::Approx(0.5));
    CHECK(cb.row(j)[2] == doctest::Approx(0.75));
  }
  // Duplicate rows: quantization always lands on the tie-break index.
  CHECK(nearest_code(cb, std::vector<double>{0.3, 0.4, 0.8}) == 0);
}

TEST_CASE("four gaussian blobs recover the blob means") {
  const double means[4][2] = {{0.2, 0.2}, {0.2, 0.8}, {0.8, 0.2}, {0.8, 0.8}};
  Rng rng(99);
  std::vector<std::vector<double>> pts;
  std::vector<std::vector<double>> by_blob_sum(4, std::vector<double>(2, 0.0));
  for (int blob = 0; blob < 4; ++blob)
    for (int i = 0; i < 100; ++i) {
      std::vector<double> p = {means[blob][0] + 0.01 * rng.normal(),
                               means[blob][1] + 0.01 * rng.normal()};
      by_blob_sum[blob][0] += p[0];
      by_blob_sum[blob][1] += p[1];
      pts.push_back(std::move(p));
    }
  // Oracle: per-blob means computed directly from the samples.
  std::vector<std::vector<double>> blob_means(4);
  for (int blob = 0; blob < 4; ++blob)
    blob_means[blob] = {by_blob_sum[blob][0] / 100.0, by_blob_sum[blob][1] / 100.0};

  const auto cb = train_codebook(corpus_from(pts), 4, 50, 7);
  std::vector<bool> matched(4, false);
  for (uint32_t j = 0; j < 4; ++j) {
    double best = 1e300;
    int arg = -1;
    for (int blob = 0; blob < 4; ++blob) {
      const double d = std::hypot(cb.row(j)[0] - blob_means[blob][0],
                                  cb.row(j)[1] - blob_means[blob][1]);
      if (d < best) {
        best = d;
        arg = blob;
      }
    }
    CHECK(best < 0.05);
    matched[arg] = true;
  }
  for (int blob = 0; blob < 4; ++blob) CHECK(matched[blob]);
}

TEST_CASE("kmeans objective is non-increasing per iteration") {
  Rng rng(11);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 300; ++i)
    pts.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
  std::vector<double> trace;
  train_codebook(corpus_from(pts), 16, 40, 5, nullptr, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("training rejects bad input") {
  std::vector<std::vector<double>> pts = {{0.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(train_codebook(corpus_from(pts), 3, 10, 0), invalid_argument);
  std::vector<std::vector<double>> bad = {{0.0, 0.0}, {1.0, std::nan("")}, {0.5, 0.5}};
  CHECK_THROWS_AS(train_codebook(corpus_from(bad), 2, 10, 0), invalid_argument);
  CHECK_THROWS_AS(train_codebook(corpus_from(pts), 2, 0, 0), invalid_argument);
}

TEST_CASE("nearest_code basics") {
  const auto cb = tiny_codebook();
  CHECK(nearest_code(cb, std::vector<double>{0.1, 0.2}) == 0);
  CHECK(nearest_code(cb, std::vector<double>{1.0, 1.0}) == 1);
  // Equidistant: lowest index wins.
  CHECK(nearest_code(cb, std::vector<double>{0.5, 0.5}) == 0);
  CHECK_THROWS_AS(nearest_code(cb, std::vector<double>{0.1}), invalid_argument);
}

TEST_CASE("nearest_code on exact rows returns the row, duplicates take the smallest") {
  Rng rng(21);
  std::vector<float> rows;
  for (int i = 0; i < 6 * 3; ++i) rows.push_back(static_cast<float>(rng.uniform01()));
  // Duplicate row 4 into row 5.
  for (int k = 0; k < 3; ++k) rows[5 * 3 + k] = rows[4 * 3 + k];
  const Codebook cb(rows, 6, 3);
  for (uint32_t j = 0; j < 4; ++j) {
    const auto r = cb.row(j);
    CHECK(nearest_code(cb, std::vector<double>{r[0], r[1], r[2]}) == j);
  }
  const auto r = cb.row(5);
  CHECK(nearest_code(cb, std::vector<double>{r[0], r[1], r[2]}) == 4);
}

TEST_CASE("nearest_code matches the exhaustive oracle on random queries") {
  Rng rng(42);
  std::vector<float> rows;
  for (int i = 0; i < 32 * 4; ++i) rows.push_back(static_cast<float>(rng.uniform01()));
  const Codebook cb(rows, 32, 4);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v = {rng.uniform01(), rng.uniform01(), rng.uniform01(),
                             rng.uniform01()};
    const uint32_t got = nearest_code(cb, v);
    CHECK(got == brute_nearest(cb, v));
    // The winner is at least as close as every other code.
    double win = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      win += (cb.row(got)[k] - v[k]) * (cb.row(got)[k] - v[k]);
    for (uint32_t j = 0; j < 32; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 4; ++k)
        d += (cb.row(j)[k] - v[k]) * (cb.row(j)[k] - v[k]);
      CHECK(win <= d + 1e-15);
    }
  }
}

TEST_CASE("lookup fetches rows and validates bounds") {
  const auto cb = tiny_codebook();
  const auto row = lookup(cb, 1);
  CHECK(row[0] == 1.0f);
  CHECK(row[1] == 1.0f);
  const auto row0 = lookup(cb, nearest_code(cb, std::vector<double>{0.0, 0.0}));
  CHECK(row0[0] == 0.0f);
  CHECK_THROWS_AS(lookup(cb, 2), invalid_argument);
}

TEST_CASE("codebook persistence round trip is byte-exact") {
  Rng rng(7);
  std::vector<float> rows;
  for (int i = 0; i < 8 * 5; ++i) rows.push_back(static_cast<float>(rng.normal()));
  const Codebook cb(rows, 8, 5);

  std::stringstream buf1, buf2;
  save_codebook(cb, buf1);
  const Codebook loaded = load_codebook(buf1);
  CHECK(loaded.id() == cb.id());
  CHECK(loaded.raw() == cb.raw());
  save_codebook(loaded, buf2);
  CHECK(buf1.str() == buf2.str());
}

TEST_CASE("codebook file size follows the format") {
  std::vector<float> rows(1024 * 12, 0.5f);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = static_cast<float>(i % 97) / 97.0f;
  const Codebook cb(rows, 1024, 12);
  std::stringstream buf;
  save_codebook(cb, buf);
  // magic(4) + version(2) + V(4) + C(4) + payload + fingerprint(8)
  CHECK(buf.str().size() == 4 + 2 + 4 + 4 + 1024 * 12 * 4 + 8);
}

TEST_CASE("codebook loader rejects corruption") {
  const auto cb = tiny_codebook();
  std::stringstream buf;
  save_codebook(cb, buf);
  std::string bytes = buf.str();

  SUBCASE("wrong magic") {
    bytes[0] = 'X';
    std::stringstream in(bytes);
    CHECK_THROWS_AS(load_codebook(in), format_error);
  }
  SUBCASE("truncation") {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_codebook(in), format_error);
  }
  SUBCASE("payload corruption breaks the fingerprint") {
    bytes[16] = static_cast<char>(bytes[16] ^ 0x40);
    std::stringstream in(bytes);
    CHECK_THROWS_AS(load_codebook(in), format_error);
  }
}
