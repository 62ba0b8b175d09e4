#include "lbw/watermark.hpp"

#include <algorithm>
#include <cmath>

namespace lbw {

SeededGaussianSource::SeededGaussianSource(uint32_t vocab, uint64_t seed, double spread)
    : vocab_(vocab), seed_(seed), spread_(spread) {
  if (vocab_ < 2) throw invalid_argument("SeededGaussianSource: vocab must be >= 2");
  if (spread_ < 0.0) throw invalid_argument("SeededGaussianSource: spread must be >= 0");
}

LogitVector SeededGaussianSource::next_logits(std::span<const uint32_t> /*context*/,
                                              std::size_t position) const {
  Rng rng(mix_seed(seed_, position));
  LogitVector l(vocab_);
  for (auto& x : l) x = spread_ * rng.normal();
  return l;
}

BigramSource::BigramSource(uint32_t vocab, std::span<const TokenMap> corpus, double alpha)
    : vocab_(vocab) {
  if (vocab_ < 2) throw invalid_argument("BigramSource: vocab must be >= 2");
  if (!(alpha > 0.0)) throw invalid_argument("BigramSource: alpha must be positive");
  std::vector<uint64_t> trans(static_cast<std::size_t>(vocab_) * vocab_, 0);
  std::vector<uint64_t> start(vocab_, 0);
  for (const auto& q : corpus) {
    if (q.vocab_size != vocab_)
      throw invalid_argument("BigramSource: corpus vocab mismatch");
    for (std::size_t t = 0; t < q.tokens.size(); ++t) {
      ++start[q.tokens[t]];
      if (t > 0)
        ++trans[static_cast<std::size_t>(q.tokens[t - 1]) * vocab_ + q.tokens[t]];
    }
  }
  trans_log_.resize(trans.size());
  for (std::size_t i = 0; i < trans.size(); ++i)
    trans_log_[i] = std::log(static_cast<double>(trans[i]) + alpha);
  start_log_.resize(vocab_);
  for (uint32_t v = 0; v < vocab_; ++v)
    start_log_[v] = std::log(static_cast<double>(start[v]) + alpha);
}

LogitVector BigramSource::next_logits(std::span<const uint32_t> context,
                                      std::size_t /*position*/) const {
  if (context.empty()) return start_log_;
  const uint32_t prev = context.back();
  if (prev >= vocab_) throw invalid_argument("BigramSource: context token out of range");
  const double* row = trans_log_.data() + static_cast<std::size_t>(prev) * vocab_;
  return LogitVector(row, row + vocab_);
}

LogitVector bias_logits_hard(const LogitVector& l, const GreenListPool& pool,
                             uint32_t list_id) {
  if (l.size() != pool.vocab_size())
    throw invalid_argument("bias_logits_hard: logit length != vocab");
  if (list_id >= pool.list_count())
    throw invalid_argument("bias_logits_hard: list id out of range");
  LogitVector out(l.size(), kMaskedLogit);
  for (uint32_t g : pool.green_indices(list_id)) out[g] = l[g];
  return out;
}

LogitVector bias_logits_soft(const LogitVector& l, const GreenListPool& pool,
                             uint32_t list_id, double sigma) {
  if (l.size() != pool.vocab_size())
    throw invalid_argument("bias_logits_soft: logit length != vocab");
  if (list_id >= pool.list_count())
    throw invalid_argument("bias_logits_soft: list id out of range");
  if (sigma < 0.0) throw invalid_argument("bias_logits_soft: sigma must be >= 0");
  LogitVector out = l;
  for (uint32_t g : pool.green_indices(list_id)) out[g] += sigma;
  return out;
}

std::vector<double> softmax(const LogitVector& l, double temperature) {
  if (!(temperature > 0.0)) throw invalid_argument("softmax: temperature must be > 0");
  double top = kMaskedLogit;
  for (double x : l)
    if (x != kMaskedLogit) top = std::max(top, x);
  if (top == kMaskedLogit) throw invalid_argument("softmax: all entries masked");
  std::vector<double> p(l.size(), 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] == kMaskedLogit) continue;
    p[i] = std::exp((l[i] - top) / temperature);
    denom += p[i];
  }
  for (auto& x : p) x /= denom;
  return p;
}

uint32_t sample_token(const LogitVector& l, double temperature, Rng& rng) {
  const auto p = softmax(l, temperature);
  const double u = rng.uniform01();
  double acc = 0.0;
  std::size_t last_live = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last_live = i;
    acc += p[i];
    if (u < acc) return static_cast<uint32_t>(i);
  }
  return static_cast<uint32_t>(last_live);  // rounding left u >= acc
}

namespace {

LogitVector apply_bias(const LogitVector& l, const GreenListPool& pool,
                       const BiasConfig& cfg) {
  switch (cfg.mode) {
    case BiasMode::none:
      return l;
    case BiasMode::hard:
      return bias_logits_hard(l, pool, cfg.list_id);
    case BiasMode::soft:
      return bias_logits_soft(l, pool, cfg.list_id, cfg.sigma);
  }
  throw invalid_argument("apply_bias: unknown mode");
}

}  // namespace

TokenMap generate_watermarked(const LogitSource& src, const GreenListPool& pool,
                              const BiasConfig& cfg, int h, int w, EmitOrder order,
                              Rng& rng) {
  if (src.vocab_size() != pool.vocab_size())
    throw invalid_argument("generate_watermarked: source and pool vocab differ");
  if (h < 1 || w < 1) throw invalid_argument("generate_watermarked: bad shape");
  if (cfg.list_id >= pool.list_count())
    throw invalid_argument("generate_watermarked: list id out of range");

  const std::size_t total = static_cast<std::size_t>(h) * w;
  std::vector<std::size_t> positions(total);
  for (std::size_t i = 0; i < total; ++i) positions[i] = i;
  if (order == EmitOrder::random_permutation) rng.shuffle(positions);

  TokenMap q(h, w, pool.vocab_size(), pool.codebook_id());
  std::vector<uint32_t> context;
  context.reserve(total);
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t pos = positions[step];
    const LogitVector l = apply_bias(src.next_logits(context, pos), pool, cfg);
    const uint32_t token = sample_token(l, cfg.temperature, rng);
    q.tokens[pos] = token;
    context.push_back(token);
  }
  return q;
}

MultiScaleTokenMaps generate_watermarked_multiscale(const LogitSource& src,
                                                    const GreenListPool& pool,
                                                    const BiasConfig& cfg,
                                                    const ScaleSchedule& sched,
                                                    Rng& rng) {
  if (src.vocab_size() != pool.vocab_size())
    throw invalid_argument("generate_watermarked_multiscale: vocab mismatch");
  if (sched.scales.empty())
    throw invalid_argument("generate_watermarked_multiscale: empty schedule");
  validate_schedule(sched, sched.scales.back().first, sched.scales.back().second);

  MultiScaleTokenMaps ms;
  ms.codebook_id = pool.codebook_id();
  BiasConfig unbiased = cfg;
  unbiased.mode = BiasMode::none;

  std::vector<uint32_t> context;
  std::size_t position = 0;
  for (std::size_t s = 0; s < sched.scales.size(); ++s) {
    const auto [sh, sw] = sched.scales[s];
    const bool last = s + 1 == sched.scales.size();
    const BiasConfig& active = last ? cfg : unbiased;
    TokenMap q(sh, sw, pool.vocab_size(), pool.codebook_id());
    for (std::size_t t = 0; t < q.tokens.size(); ++t, ++position) {
      const LogitVector l = apply_bias(src.next_logits(context, position), pool, active);
      const uint32_t token = sample_token(l, active.temperature, rng);
      q.tokens[t] = token;
      context.push_back(token);
    }
    ms.maps.push_back(std::move(q));
  }
  return ms;
}

PosthocResult embed_posthoc(const Image& img, const Codebook& cb,
                            const GreenListPool& pool, uint32_t list_id, int patch) {
  if (list_id >= pool.list_count())
    throw invalid_argument("embed_posthoc: list id out of range");
  if (pool.vocab_size() != cb.vocab_size())
    throw invalid_argument("embed_posthoc: pool and codebook vocab differ");
  TokenMap q = quantize(encode(img, patch), cb);
  for (auto& t : q.tokens) t = nearest_green(cb, pool, list_id, t);
  PosthocResult result;
  result.image = decode(q, cb, patch);
  result.tokens = std::move(q);
  return result;
}

}  // namespace lbw
