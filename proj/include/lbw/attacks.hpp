#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lbw/codebook.hpp"
#include "lbw/image.hpp"
#include "lbw/quantizer.hpp"
#include "lbw/rng.hpp"

namespace lbw {

enum class AttackKind {
  gauss_noise,
  box_blur,
  crop_resize,
  rotate,
  value_jitter,
  pixel_quantize,
  token_flip,
  foreign_requantize,
};

const char* attack_kind_name(AttackKind kind);
bool is_token_attack(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::gauss_noise;
  std::map<std::string, double> params;
  uint64_t seed = 0;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

// Additive N(0, var) per pixel, clamped to [0, 1].
Image gauss_noise(const Image& img, double var, Rng& rng);
// k x k mean filter with reflected borders.
Image box_blur(const Image& img, int k);
// Random crop covering `ratio` of the area (side fraction sqrt(ratio)),
// resized back to the original size bilinearly.
Image crop_resize(const Image& img, double ratio, Rng& rng);
// Rotation about the image center, bilinear sampling, out-of-bounds 0.5.
Image rotate(const Image& img, double degrees);
// clamp((v - 0.5) * contrast + 0.5 + brightness).
Image value_jitter(const Image& img, double brightness, double contrast);
// Uniform quantization to `levels` values per channel; levels = 256 is the
// identity on 8-bit-sourced images.
Image pixel_quantize(const Image& img, int levels);
// Each token independently replaced by a uniform random token with
// probability p (replacement may pick the original token).
TokenMap token_flip(const TokenMap& q, double p, Rng& rng);
// encode/quantize/decode through an unrelated codebook; stands in for
// re-synthesis through a second generator.
Image foreign_requantize(const Image& img, const Codebook& cb2, int patch);

// Pipeline text: attacks separated by ';', each "kind:key=value,key=value".
// Example: "gauss_noise:var=0.1,seed=7;box_blur:k=8". Pixel attacks must
// precede token attacks.
std::vector<AttackSpec> parse_attack_pipeline(const std::string& text);

struct AttackContext {
  const Codebook* foreign_codebook = nullptr;  // for foreign_requantize
  int patch = 0;                               // for foreign_requantize
  uint64_t stream = 0;  // folded into each spec seed; one stream per job
};

// Applies the pixel attacks of the pipeline in order; token attacks are
// skipped (they run on the re-quantized map via apply_token_attacks).
Image apply_pixel_attacks(Image img, std::span<const AttackSpec> pipeline,
                          const AttackContext& ctx);
TokenMap apply_token_attacks(TokenMap q, std::span<const AttackSpec> pipeline,
                             const AttackContext& ctx);

}  // namespace lbw
