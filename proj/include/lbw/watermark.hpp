#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lbw/greenlist.hpp"
#include "lbw/quantizer.hpp"
#include "lbw/rng.hpp"

namespace lbw {

using LogitVector = std::vector<double>;

// Mask sentinel for hard biasing. Kept finite so arithmetic stays NaN-free;
// softmax() and sample_token() assign masked entries exactly zero probability.
inline constexpr double kMaskedLogit = std::numeric_limits<double>::lowest();

// Produces next-token scores. Implementations must be deterministic given
// (context, position, construction parameters).
class LogitSource {
 public:
  virtual ~LogitSource() = default;
  virtual uint32_t vocab_size() const = 0;
  // context: tokens already emitted, in emission order.
  // position: linear index of the grid cell being generated.
  virtual LogitVector next_logits(std::span<const uint32_t> context,
                                  std::size_t position) const = 0;
};

// Context-free source: every position gets its own seeded Gaussian logits
// scaled by `spread`. spread = 0 yields a uniform next-token distribution.
class SeededGaussianSource final : public LogitSource {
 public:
  SeededGaussianSource(uint32_t vocab, uint64_t seed, double spread);
  uint32_t vocab_size() const override { return vocab_; }
  LogitVector next_logits(std::span<const uint32_t> context,
                          std::size_t position) const override;

 private:
  uint32_t vocab_;
  uint64_t seed_;
  double spread_;
};

// First-order source with Laplace-smoothed transition counts fitted on
// raster-scan token sequences. The first step uses the unigram counts.
class BigramSource final : public LogitSource {
 public:
  BigramSource(uint32_t vocab, std::span<const TokenMap> corpus, double alpha = 1.0);
  uint32_t vocab_size() const override { return vocab_; }
  LogitVector next_logits(std::span<const uint32_t> context,
                          std::size_t position) const override;

 private:
  uint32_t vocab_;
  std::vector<double> trans_log_;  // prev * vocab + next
  std::vector<double> start_log_;
};

enum class BiasMode { none, hard, soft };

struct BiasConfig {
  BiasMode mode = BiasMode::none;
  double sigma = 0.0;  // soft mode only
  uint32_t list_id = 0;
  double temperature = 1.0;
};

enum class EmitOrder { raster, random_permutation };

// Red entries masked to kMaskedLogit, green entries untouched.
LogitVector bias_logits_hard(const LogitVector& l, const GreenListPool& pool,
                             uint32_t list_id);

// Green entries raised by sigma, red entries untouched; sigma = 0 is the identity.
LogitVector bias_logits_soft(const LogitVector& l, const GreenListPool& pool,
                             uint32_t list_id, double sigma);

// Probabilities of softmax(l / temperature); masked entries get exactly 0.
std::vector<double> softmax(const LogitVector& l, double temperature);

// Draws from softmax(l / temperature). Throws invalid_argument when every
// entry is masked.
uint32_t sample_token(const LogitVector& l, double temperature, Rng& rng);

// Emits h*w tokens in the requested order, applying the configured bias at
// every step. The green/red partition is global, so the realized map
// distribution does not depend on the order for context-free sources.
TokenMap generate_watermarked(const LogitSource& src, const GreenListPool& pool,
                              const BiasConfig& cfg, int h, int w, EmitOrder order,
                              Rng& rng);

// Scales below the last are sampled without bias; the bias applies only to
// the final (largest) scale, which is also the one detection reads.
MultiScaleTokenMaps generate_watermarked_multiscale(const LogitSource& src,
                                                    const GreenListPool& pool,
                                                    const BiasConfig& cfg,
                                                    const ScaleSchedule& sched,
                                                    Rng& rng);

struct PosthocResult {
  Image image;    // decode of the substituted token map
  TokenMap tokens;  // all-green by construction
};

// Quantize, replace every red token with its nearest green token, decode.
PosthocResult embed_posthoc(const Image& img, const Codebook& cb,
                            const GreenListPool& pool, uint32_t list_id, int patch);

}  // namespace lbw
