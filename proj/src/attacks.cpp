#include "lbw/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lbw {

namespace {

constexpr double kPi = 3.141592653589793238462643;

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Bilinear sample with border clamp; caller guarantees in-range coordinates.
double sample_clamped(const Image& img, double y, double x, int ch) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const int y0 = static_cast<int>(y);
  const int x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  const double top = img.at(y0, x0, ch) + (img.at(y0, x1, ch) - img.at(y0, x0, ch)) * fx;
  const double bot = img.at(y1, x0, ch) + (img.at(y1, x1, ch) - img.at(y1, x0, ch)) * fx;
  return top + (bot - top) * fy;
}

Image resize_bilinear(const Image& img, int h2, int w2) {
  if (h2 == img.height && w2 == img.width) return img;
  Image out(h2, w2, img.channels);
  for (int r = 0; r < h2; ++r) {
    const double sy = (r + 0.5) * static_cast<double>(img.height) / h2 - 0.5;
    for (int c = 0; c < w2; ++c) {
      const double sx = (c + 0.5) * static_cast<double>(img.width) / w2 - 0.5;
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(r, c, ch) = std::clamp(sample_clamped(img, sy, sx, ch), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::gauss_noise: return "gauss_noise";
    case AttackKind::box_blur: return "box_blur";
    case AttackKind::crop_resize: return "crop_resize";
    case AttackKind::rotate: return "rotate";
    case AttackKind::value_jitter: return "value_jitter";
    case AttackKind::pixel_quantize: return "pixel_quantize";
    case AttackKind::token_flip: return "token_flip";
    case AttackKind::foreign_requantize: return "foreign_requantize";
  }
  return "?";
}

bool is_token_attack(AttackKind kind) { return kind == AttackKind::token_flip; }

Image gauss_noise(const Image& img, double var, Rng& rng) {
  if (var < 0.0) throw invalid_argument("gauss_noise: var must be >= 0");
  Image out = img;
  if (var == 0.0) return out;
  const double sigma = std::sqrt(var);
  for (auto& v : out.pix) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

Image box_blur(const Image& img, int k) {
  if (k < 1) throw invalid_argument("box_blur: k must be >= 1");
  if (k == 1) return img;
  Image out(img.height, img.width, img.channels);
  const int off = (k - 1) / 2;
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0;
        for (int dr = 0; dr < k; ++dr) {
          const int rr = reflect(r - off + dr, img.height);
          for (int dc = 0; dc < k; ++dc)
            acc += img.at(rr, reflect(c - off + dc, img.width), ch);
        }
        out.at(r, c, ch) = acc * inv;
      }
  return out;
}

Image crop_resize(const Image& img, double ratio, Rng& rng) {
  if (!(ratio > 0.0) || ratio > 1.0)
    throw invalid_argument("crop_resize: ratio must be in (0, 1]");
  const double side = std::sqrt(ratio);
  const int ch_px = std::max(1, static_cast<int>(std::lround(side * img.height)));
  const int cw_px = std::max(1, static_cast<int>(std::lround(side * img.width)));
  const int top = static_cast<int>(rng.uniform_below(img.height - ch_px + 1));
  const int left = static_cast<int>(rng.uniform_below(img.width - cw_px + 1));
  Image crop(ch_px, cw_px, img.channels);
  for (int r = 0; r < ch_px; ++r)
    for (int c = 0; c < cw_px; ++c)
      for (int ch = 0; ch < img.channels; ++ch)
        crop.at(r, c, ch) = img.at(top + r, left + c, ch);
  return resize_bilinear(crop, img.height, img.width);
}

Image rotate(const Image& img, double degrees) {
  const double a = degrees * kPi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double cy = (img.height - 1) / 2.0;
  const double cx = (img.width - 1) / 2.0;
  Image out(img.height, img.width, img.channels);
  // Tolerance keeps border pixels inside when cos/sin carry fp fuzz
  // (cos(pi/2) is ~6e-17, not 0).
  constexpr double kEdge = 1e-9;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const double dy = r - cy;
      const double dx = c - cx;
      const double sy = cy + cs * dy + sn * dx;
      const double sx = cx - sn * dy + cs * dx;
      const bool inside = sy >= -kEdge && sy <= img.height - 1 + kEdge &&
                          sx >= -kEdge && sx <= img.width - 1 + kEdge;
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(r, c, ch) = inside ? sample_clamped(img, sy, sx, ch) : 0.5;
    }
  return out;
}

Image value_jitter(const Image& img, double brightness, double contrast) {
  Image out = img;
  if (brightness == 0.0 && contrast == 1.0) return out;  // exact no-op
  for (auto& v : out.pix)
    v = std::clamp((v - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0);
  return out;
}

Image pixel_quantize(const Image& img, int levels) {
  if (levels < 2) throw invalid_argument("pixel_quantize: levels must be >= 2");
  Image out = img;
  const double steps = static_cast<double>(levels - 1);
  for (auto& v : out.pix)
    v = std::round(std::clamp(v, 0.0, 1.0) * steps) / steps;
  return out;
}

TokenMap token_flip(const TokenMap& q, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw invalid_argument("token_flip: p must be in [0, 1]");
  TokenMap out = q;
  for (auto& t : out.tokens)
    if (rng.uniform01() < p) t = static_cast<uint32_t>(rng.uniform_below(q.vocab_size));
  return out;
}

Image foreign_requantize(const Image& img, const Codebook& cb2, int patch) {
  return decode(quantize(encode(img, patch), cb2), cb2, patch);
}

std::vector<AttackSpec> parse_attack_pipeline(const std::string& text) {
  std::vector<AttackSpec> pipeline;
  std::stringstream stages(text);
  std::string stage;
  bool token_stage_seen = false;
  while (std::getline(stages, stage, ';')) {
    // trim
    const auto b = stage.find_first_not_of(" \t\r\n");
    const auto e = stage.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) continue;
    stage = stage.substr(b, e - b + 1);

    AttackSpec spec;
    std::string name = stage;
    std::string args;
    if (const auto colon = stage.find(':'); colon != std::string::npos) {
      name = stage.substr(0, colon);
      args = stage.substr(colon + 1);
    }
    bool known = false;
    for (AttackKind kind :
         {AttackKind::gauss_noise, AttackKind::box_blur, AttackKind::crop_resize,
          AttackKind::rotate, AttackKind::value_jitter, AttackKind::pixel_quantize,
          AttackKind::token_flip, AttackKind::foreign_requantize}) {
      if (name == attack_kind_name(kind)) {
        spec.kind = kind;
        known = true;
        break;
      }
    }
    if (!known) throw invalid_argument("unknown attack kind: " + name);

    std::stringstream kv(args);
    std::string pair;
    while (std::getline(kv, pair, ',')) {
      if (pair.empty()) continue;
      const auto eq = pair.find('=');
      if (eq == std::string::npos)
        throw invalid_argument("attack parameter must be key=value: " + pair);
      const std::string key = pair.substr(0, eq);
      const double value = std::stod(pair.substr(eq + 1));
      if (key == "seed")
        spec.seed = static_cast<uint64_t>(value);
      else
        spec.params[key] = value;
    }

    if (is_token_attack(spec.kind))
      token_stage_seen = true;
    else if (token_stage_seen)
      throw invalid_argument("pixel attacks must precede token attacks in a pipeline");
    pipeline.push_back(std::move(spec));
  }
  return pipeline;
}

Image apply_pixel_attacks(Image img, std::span<const AttackSpec> pipeline,
                          const AttackContext& ctx) {
  for (const auto& spec : pipeline) {
    if (is_token_attack(spec.kind)) continue;
    Rng rng(mix_seed(spec.seed, ctx.stream));
    switch (spec.kind) {
      case AttackKind::gauss_noise:
        img = gauss_noise(img, spec.param("var", 0.1), rng);
        break;
      case AttackKind::box_blur:
        img = box_blur(img, static_cast<int>(spec.param("k", 8)));
        break;
      case AttackKind::crop_resize:
        img = crop_resize(img, spec.param("ratio", 0.7), rng);
        break;
      case AttackKind::rotate:
        img = rotate(img, spec.param("degrees", 45.0));
        break;
      case AttackKind::value_jitter:
        img = value_jitter(img, spec.param("brightness", 0.0),
                           spec.param("contrast", 1.0));
        break;
      case AttackKind::pixel_quantize:
        img = pixel_quantize(img, static_cast<int>(spec.param("levels", 32)));
        break;
      case AttackKind::foreign_requantize:
        if (!ctx.foreign_codebook || ctx.patch < 1)
          throw invalid_argument(
              "foreign_requantize requires a foreign codebook and patch size");
        img = foreign_requantize(img, *ctx.foreign_codebook, ctx.patch);
        break;
      case AttackKind::token_flip:
        break;
    }
  }
  return img;
}

TokenMap apply_token_attacks(TokenMap q, std::span<const AttackSpec> pipeline,
                             const AttackContext& ctx) {
  for (const auto& spec : pipeline) {
    if (!is_token_attack(spec.kind)) continue;
    Rng rng(mix_seed(spec.seed, ctx.stream));
    q = token_flip(q, spec.param("p", 0.1), rng);
  }
  return q;
}

}  // namespace lbw
