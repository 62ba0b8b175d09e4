#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lbw/codebook.hpp"
#include "lbw/image.hpp"

namespace lbw {

// Grid of feature vectors, one per patch cell.
struct FeatureMap {
  int h = 0;
  int w = 0;
  int dim = 0;
  std::vector<double> values;  // (i*w + j)*dim + k

  FeatureMap() = default;
  FeatureMap(int h_, int w_, int dim_)
      : h(h_), w(w_), dim(dim_),
        values(static_cast<std::size_t>(h_) * w_ * dim_, 0.0) {}

  std::span<const double> cell(int i, int j) const {
    return {values.data() + (static_cast<std::size_t>(i) * w + j) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<double> cell(int i, int j) {
    return {values.data() + (static_cast<std::size_t>(i) * w + j) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Grid of codebook indices. codebook_id = 0 means not bound to a codebook.
struct TokenMap {
  int h = 0;
  int w = 0;
  uint32_t vocab_size = 0;
  uint64_t codebook_id = 0;
  std::vector<uint32_t> tokens;

  TokenMap() = default;
  TokenMap(int h_, int w_, uint32_t vocab, uint64_t cb_id = 0)
      : h(h_), w(w_), vocab_size(vocab), codebook_id(cb_id),
        tokens(static_cast<std::size_t>(h_) * w_, 0) {}

  uint32_t& at(int i, int j) { return tokens[static_cast<std::size_t>(i) * w + j]; }
  uint32_t at(int i, int j) const { return tokens[static_cast<std::size_t>(i) * w + j]; }
  std::size_t size() const { return tokens.size(); }
};

// Ordered grid resolutions, strictly ascending in area; the last entry is the
// full-resolution grid.
struct ScaleSchedule {
  std::vector<std::pair<int, int>> scales;
};

ScaleSchedule parse_scale_schedule(const std::string& text);  // "1x1,2x2,4x4"
void validate_schedule(const ScaleSchedule& sched, int h, int w);

struct MultiScaleTokenMaps {
  std::vector<TokenMap> maps;
  uint64_t codebook_id = 0;
};

// Non-overlapping patch flattening; cell (i,j) holds the patch pixels in
// (row, col, channel) order, so dim = patch^2 * channels. Lossless.
FeatureMap encode(const Image& img, int patch);

// Per-cell nearest codebook row.
TokenMap quantize(const FeatureMap& f, const Codebook& cb);

// Patch unflattening with clamp to [0, 1].
Image features_to_image(const FeatureMap& f, int patch, int channels);

// Code vectors of q laid out as a feature map.
FeatureMap lookup_map(const TokenMap& q, const Codebook& cb);

// lookup_map + features_to_image.
Image decode(const TokenMap& q, const Codebook& cb, int patch);

// Bilinear resampling. Output cell (i,j) samples the source at
// ((i+0.5)*h/h2 - 0.5, (j+0.5)*w/w2 - 0.5), clamped to the border; a
// same-size call is the identity.
FeatureMap interpolate(const FeatureMap& g, int h2, int w2);

// Residual quantization over the schedule: at each scale the running
// residual is downsampled, quantized, and the upsampled reconstruction is
// subtracted before the next scale.
MultiScaleTokenMaps quantize_multiscale(const FeatureMap& f, const Codebook& cb,
                                        const ScaleSchedule& sched);

// Sum of upsampled per-scale reconstructions.
FeatureMap reconstruct_multiscale(const MultiScaleTokenMaps& ms, const Codebook& cb,
                                  const ScaleSchedule& sched);

// All patches of all images as one corpus.
PatchCorpus build_patch_corpus(const std::vector<Image>& images, int patch);

void save_tokenmap(const TokenMap& q, std::ostream& out);
void save_tokenmap(const TokenMap& q, const std::string& path);
TokenMap load_tokenmap(std::istream& in);
TokenMap load_tokenmap(const std::string& path);

}  // namespace lbw
