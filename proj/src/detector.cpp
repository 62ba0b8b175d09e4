#include "lbw/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace lbw {

std::string DetectionResult::to_record() const {
  std::ostringstream out;
  out.precision(17);
  out << "{\"green_counts\":[";
  for (std::size_t i = 0; i < green_counts.size(); ++i) {
    if (i) out << ",";
    out << green_counts[i];
  }
  out << "],\"best_list\":" << best_list << ",\"z\":" << z
      << ",\"gamma_eff\":" << gamma_eff << ",\"map_size\":" << map_size
      << ",\"threshold\":" << threshold
      << ",\"decision\":" << (decision ? "true" : "false") << "}";
  return out.str();
}

int64_t count_green(const TokenMap& q, const GreenListPool& pool, uint32_t list_id) {
  if (q.vocab_size != pool.vocab_size())
    throw invalid_argument("count_green: vocab mismatch");
  if (list_id >= pool.list_count())
    throw invalid_argument("count_green: list id out of range");
  int64_t count = 0;
  for (uint32_t t : q.tokens) count += pool.is_green(list_id, t);
  return count;
}

double z_score(int64_t count, double gamma_eff, int64_t hw) {
  if (!(gamma_eff > 0.0) || !(gamma_eff < 1.0))
    throw invalid_argument("z_score: gamma_eff must be strictly inside (0, 1)");
  if (hw < 1) throw invalid_argument("z_score: hw must be >= 1");
  const double n = static_cast<double>(hw);
  return (static_cast<double>(count) - gamma_eff * n) /
         std::sqrt(gamma_eff * (1.0 - gamma_eff) * n);
}

DetectionResult detect_tokenmap(const TokenMap& q, const GreenListPool& pool,
                                double z_th) {
  if (q.vocab_size != pool.vocab_size())
    throw invalid_argument("detect_tokenmap: vocab mismatch");
  DetectionResult r;
  r.map_size = static_cast<int64_t>(q.size());
  r.gamma_eff = pool.gamma_eff();
  r.threshold = z_th;
  r.green_counts.resize(pool.list_count());
  // Single pass over the map, counting all lists at once.
  for (uint32_t t : q.tokens)
    for (uint32_t i = 0; i < pool.list_count(); ++i)
      r.green_counts[i] += pool.is_green(i, t);
  r.best_list = 0;
  for (uint32_t i = 1; i < pool.list_count(); ++i)
    if (r.green_counts[i] > r.green_counts[r.best_list]) r.best_list = i;
  r.z = z_score(r.green_counts[r.best_list], r.gamma_eff, r.map_size);
  r.decision = r.z > z_th;
  return r;
}

DetectionResult detect_image(const Image& img, const Codebook& cb,
                             const GreenListPool& pool, int patch, double z_th) {
  if (pool.codebook_id() != 0 && pool.codebook_id() != cb.id())
    throw invalid_argument("detect_image: pool bound to a different codebook");
  return detect_tokenmap(quantize(encode(img, patch), cb), pool, z_th);
}

DetectionResult detect_image_multiscale(const Image& img, const Codebook& cb,
                                        const GreenListPool& pool, int patch,
                                        const ScaleSchedule& sched, double z_th) {
  if (pool.codebook_id() != 0 && pool.codebook_id() != cb.id())
    throw invalid_argument("detect_image_multiscale: pool bound to a different codebook");
  const auto ms = quantize_multiscale(encode(img, patch), cb, sched);
  return detect_tokenmap(ms.maps.back(), pool, z_th);
}

TokenMap uniform_token_map(int h, int w, uint32_t vocab, Rng& rng) {
  if (h < 1 || w < 1 || vocab < 1)
    throw invalid_argument("uniform_token_map: bad dimensions");
  TokenMap q(h, w, vocab);
  for (auto& t : q.tokens) t = static_cast<uint32_t>(rng.uniform_below(vocab));
  return q;
}

double calibrate_threshold(const GreenListPool& pool, int64_t hw, double target_fpr,
                           std::size_t trials, Rng& rng) {
  if (!(target_fpr > 0.0) || !(target_fpr < 1.0))
    throw invalid_argument("calibrate_threshold: target_fpr must be in (0, 1)");
  if (trials < 1000) throw invalid_argument("calibrate_threshold: need >= 1000 trials");
  if (hw < 1) throw invalid_argument("calibrate_threshold: hw must be >= 1");

  const uint32_t n_lists = pool.list_count();
  const uint32_t vocab = pool.vocab_size();
  if (hw >= 65536) throw invalid_argument("calibrate_threshold: hw too large");

  // Per-token list membership spread into 16-bit lanes (4 lists per word),
  // so each simulated token costs a handful of adds instead of n_lists bit
  // tests. Counts stay below 2^16, so lanes cannot carry into each other.
  const std::size_t words = (n_lists + 3) / 4;
  std::vector<uint64_t> spread(static_cast<std::size_t>(vocab) * words, 0);
  for (uint32_t v = 0; v < vocab; ++v)
    for (uint32_t i = 0; i < n_lists; ++i)
      if (pool.is_green(i, v))
        spread[static_cast<std::size_t>(v) * words + i / 4] |=
            1ull << (16 * (i % 4));

  // Counts are integers, so only count cutoffs are achievable thresholds;
  // the histogram gives #trials whose max-list count exceeds each cutoff.
  std::vector<std::size_t> count_hist(static_cast<std::size_t>(hw) + 1, 0);
  std::vector<uint64_t> acc(words);
  for (std::size_t t = 0; t < trials; ++t) {
    std::fill(acc.begin(), acc.end(), 0);
    for (int64_t k = 0; k < hw; ++k) {
      const auto token = rng.uniform_below(vocab);
      const uint64_t* row = spread.data() + token * words;
      for (std::size_t w = 0; w < words; ++w) acc[w] += row[w];
    }
    int64_t max_count = 0;
    for (uint32_t i = 0; i < n_lists; ++i) {
      const auto c = static_cast<int64_t>((acc[i / 4] >> (16 * (i % 4))) & 0xffff);
      max_count = std::max(max_count, c);
    }
    ++count_hist[static_cast<std::size_t>(max_count)];
  }

  int64_t best_cut = hw;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t above = 0;  // trials with max count > cut
  for (int64_t cut = hw; cut >= 0; --cut) {
    const double fpr = static_cast<double>(above) / static_cast<double>(trials);
    const double gap = std::abs(fpr - target_fpr);
    if (gap < best_gap) {
      best_gap = gap;
      best_cut = cut;
    }
    above += count_hist[static_cast<std::size_t>(cut)];
  }
  return z_score(best_cut, pool.gamma_eff(), hw);
}

}  // namespace lbw
