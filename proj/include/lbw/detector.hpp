#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbw/greenlist.hpp"
#include "lbw/quantizer.hpp"
#include "lbw/rng.hpp"

namespace lbw {

struct DetectionResult {
  std::vector<int64_t> green_counts;  // one per list
  uint32_t best_list = 0;
  double z = 0.0;
  double gamma_eff = 0.0;
  int64_t map_size = 0;
  double threshold = 0.0;
  bool decision = false;

  // One-line JSON with a fixed key order, suitable for diffing.
  std::string to_record() const;
};

// Tokens of q that belong to G_{list_id}.
int64_t count_green(const TokenMap& q, const GreenListPool& pool, uint32_t list_id);

// One-proportion z statistic: (count - g*hw) / sqrt(g*(1-g)*hw).
double z_score(int64_t count, double gamma_eff, int64_t hw);

// Scores every list, takes the max count (lowest list index on ties), and
// compares the resulting z against z_th.
DetectionResult detect_tokenmap(const TokenMap& q, const GreenListPool& pool,
                                double z_th);

// quantize + detect_tokenmap. Needs only the codebook and the pool.
DetectionResult detect_image(const Image& img, const Codebook& cb,
                             const GreenListPool& pool, int patch, double z_th);

// Multiscale pipelines carry the watermark in the largest scale, so detection
// re-runs the residual quantization and reads the final map.
DetectionResult detect_image_multiscale(const Image& img, const Codebook& cb,
                                        const GreenListPool& pool, int patch,
                                        const ScaleSchedule& sched, double z_th);

// Uniform-token null map, the H0 model for calibration.
TokenMap uniform_token_map(int h, int w, uint32_t vocab, Rng& rng);

// Monte-Carlo threshold for the max-over-lists statistic: simulates `trials`
// null maps and returns the achievable threshold whose empirical false
// positive rate is closest to target_fpr.
double calibrate_threshold(const GreenListPool& pool, int64_t hw, double target_fpr,
                           std::size_t trials, Rng& rng);

}  // namespace lbw
