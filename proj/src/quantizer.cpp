#include "lbw/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lbw/detail/binio.hpp"

namespace lbw {

namespace {

constexpr char kMagic[4] = {'L', 'B', 'W', 'T'};
constexpr uint16_t kVersion = 1;

}  // namespace

ScaleSchedule parse_scale_schedule(const std::string& text) {
  ScaleSchedule sched;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos)
      throw invalid_argument("scale schedule: expected HxW entries: " + text);
    sched.scales.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
  }
  if (sched.scales.empty()) throw invalid_argument("scale schedule: empty");
  return sched;
}

void validate_schedule(const ScaleSchedule& sched, int h, int w) {
  if (sched.scales.empty()) throw invalid_argument("scale schedule: empty");
  long prev_area = 0;
  for (const auto& [sh, sw] : sched.scales) {
    if (sh < 1 || sw < 1) throw invalid_argument("scale schedule: non-positive scale");
    const long area = static_cast<long>(sh) * sw;
    if (area <= prev_area)
      throw invalid_argument("scale schedule: areas must be strictly ascending");
    prev_area = area;
  }
  if (sched.scales.back() != std::make_pair(h, w))
    throw invalid_argument("scale schedule: final scale must equal the full grid");
}

FeatureMap encode(const Image& img, int patch) {
  if (patch < 1 || img.height % patch != 0 || img.width % patch != 0)
    throw invalid_argument("encode: patch size must divide image dimensions");
  const int h = img.height / patch;
  const int w = img.width / patch;
  FeatureMap f(h, w, patch * patch * img.channels);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      auto cell = f.cell(i, j);
      std::size_t k = 0;
      for (int pr = 0; pr < patch; ++pr)
        for (int pc = 0; pc < patch; ++pc)
          for (int ch = 0; ch < img.channels; ++ch)
            cell[k++] = img.at(i * patch + pr, j * patch + pc, ch);
    }
  return f;
}

TokenMap quantize(const FeatureMap& f, const Codebook& cb) {
  if (f.dim != static_cast<int>(cb.dim()))
    throw invalid_argument("quantize: feature dim does not match codebook dim");
  TokenMap q(f.h, f.w, cb.vocab_size(), cb.id());
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j) q.at(i, j) = nearest_code(cb, f.cell(i, j));
  return q;
}

Image features_to_image(const FeatureMap& f, int patch, int channels) {
  if (patch < 1 || f.dim != patch * patch * channels)
    throw invalid_argument("features_to_image: dim must equal patch^2 * channels");
  Image img(f.h * patch, f.w * patch, channels);
  for (int i = 0; i < f.h; ++i)
    for (int j = 0; j < f.w; ++j) {
      const auto cell = f.cell(i, j);
      std::size_t k = 0;
      for (int pr = 0; pr < patch; ++pr)
        for (int pc = 0; pc < patch; ++pc)
          for (int ch = 0; ch < channels; ++ch)
            img.at(i * patch + pr, j * patch + pc, ch) = std::clamp(cell[k++], 0.0, 1.0);
    }
  return img;
}

FeatureMap lookup_map(const TokenMap& q, const Codebook& cb) {
  if (q.vocab_size != cb.vocab_size())
    throw invalid_argument("lookup_map: vocab size mismatch");
  if (q.codebook_id != 0 && q.codebook_id != cb.id())
    throw invalid_argument("lookup_map: token map bound to a different codebook");
  FeatureMap f(q.h, q.w, static_cast<int>(cb.dim()));
  for (int i = 0; i < q.h; ++i)
    for (int j = 0; j < q.w; ++j) {
      const auto row = lookup(cb, q.at(i, j));
      auto cell = f.cell(i, j);
      for (std::size_t k = 0; k < row.size(); ++k) cell[k] = row[k];
    }
  return f;
}

Image decode(const TokenMap& q, const Codebook& cb, int patch) {
  const int channels = patch > 0 ? static_cast<int>(cb.dim()) / (patch * patch) : 0;
  if (patch < 1 || channels * patch * patch != static_cast<int>(cb.dim()) ||
      (channels != 1 && channels != 3))
    throw invalid_argument("decode: codebook dim incompatible with patch size");
  return features_to_image(lookup_map(q, cb), patch, channels);
}

FeatureMap interpolate(const FeatureMap& g, int h2, int w2) {
  if (h2 < 1 || w2 < 1) throw invalid_argument("interpolate: target dims must be >= 1");
  if (h2 == g.h && w2 == g.w) return g;
  FeatureMap out(h2, w2, g.dim);
  for (int i = 0; i < h2; ++i) {
    double sy = (i + 0.5) * static_cast<double>(g.h) / h2 - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(g.h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, g.h - 1);
    const double fy = sy - y0;
    for (int j = 0; j < w2; ++j) {
      double sx = (j + 0.5) * static_cast<double>(g.w) / w2 - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(g.w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, g.w - 1);
      const double fx = sx - x0;
      auto dst = out.cell(i, j);
      const auto c00 = g.cell(y0, x0);
      const auto c01 = g.cell(y0, x1);
      const auto c10 = g.cell(y1, x0);
      const auto c11 = g.cell(y1, x1);
      for (int k = 0; k < g.dim; ++k) {
        const double top = c00[k] + (c01[k] - c00[k]) * fx;
        const double bot = c10[k] + (c11[k] - c10[k]) * fx;
        dst[k] = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

MultiScaleTokenMaps quantize_multiscale(const FeatureMap& f, const Codebook& cb,
                                        const ScaleSchedule& sched) {
  validate_schedule(sched, f.h, f.w);
  if (f.dim != static_cast<int>(cb.dim()))
    throw invalid_argument("quantize_multiscale: feature dim mismatch");
  MultiScaleTokenMaps ms;
  ms.codebook_id = cb.id();
  FeatureMap residual = f;
  for (const auto& [sh, sw] : sched.scales) {
    const FeatureMap down = interpolate(residual, sh, sw);
    TokenMap q = quantize(down, cb);
    const FeatureMap up = interpolate(lookup_map(q, cb), f.h, f.w);
    for (std::size_t k = 0; k < residual.values.size(); ++k)
      residual.values[k] -= up.values[k];
    ms.maps.push_back(std::move(q));
  }
  return ms;
}

FeatureMap reconstruct_multiscale(const MultiScaleTokenMaps& ms, const Codebook& cb,
                                  const ScaleSchedule& sched) {
  if (ms.maps.empty() || ms.maps.size() != sched.scales.size())
    throw invalid_argument("reconstruct_multiscale: schedule mismatch");
  if (ms.codebook_id != 0 && ms.codebook_id != cb.id())
    throw invalid_argument("reconstruct_multiscale: codebook mismatch");
  const auto [fh, fw] = sched.scales.back();
  FeatureMap acc(fh, fw, static_cast<int>(cb.dim()));
  for (std::size_t s = 0; s < ms.maps.size(); ++s) {
    const auto& q = ms.maps[s];
    if (q.h != sched.scales[s].first || q.w != sched.scales[s].second)
      throw invalid_argument("reconstruct_multiscale: map shape mismatch");
    const FeatureMap up = interpolate(lookup_map(q, cb), fh, fw);
    for (std::size_t k = 0; k < acc.values.size(); ++k) acc.values[k] += up.values[k];
  }
  return acc;
}

PatchCorpus build_patch_corpus(const std::vector<Image>& images, int patch) {
  PatchCorpus corpus;
  for (const auto& img : images) {
    const FeatureMap f = encode(img, patch);
    for (int i = 0; i < f.h; ++i)
      for (int j = 0; j < f.w; ++j) corpus.push(f.cell(i, j));
  }
  corpus.source_count = images.size();
  if (corpus.size() == 0) throw invalid_argument("build_patch_corpus: empty corpus");
  return corpus;
}

void save_tokenmap(const TokenMap& q, std::ostream& out) {
  detail::put_bytes(out, kMagic, 4);
  detail::put_u16(out, kVersion);
  detail::put_u32(out, static_cast<uint32_t>(q.h));
  detail::put_u32(out, static_cast<uint32_t>(q.w));
  detail::put_u32(out, q.vocab_size);
  detail::put_u64(out, q.codebook_id);
  for (uint32_t t : q.tokens) detail::put_u32(out, t);
}

void save_tokenmap(const TokenMap& q, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw invalid_argument("cannot open token map for writing: " + path);
  save_tokenmap(q, out);
  if (!out) throw std::runtime_error("token map write failed: " + path);
}

TokenMap load_tokenmap(std::istream& in) {
  char magic[4];
  detail::get_bytes(in, magic, 4, 0, "tokenmap");
  if (!std::equal(magic, magic + 4, kMagic)) throw format_error("tokenmap: bad magic", 0);
  const uint16_t version = detail::get_u16(in, 4, "tokenmap");
  if (version != kVersion) throw format_error("tokenmap: unsupported version", 4);
  const uint32_t h = detail::get_u32(in, 6, "tokenmap");
  const uint32_t w = detail::get_u32(in, 10, "tokenmap");
  const uint32_t vocab = detail::get_u32(in, 14, "tokenmap");
  const uint64_t cb_id = detail::get_u64(in, 18, "tokenmap");
  if (h < 1 || w < 1 || vocab < 1 || static_cast<uint64_t>(h) * w > (1ull << 26))
    throw format_error("tokenmap: implausible dimensions", 6);
  TokenMap q(static_cast<int>(h), static_cast<int>(w), vocab, cb_id);
  uint64_t offset = 26;
  for (auto& t : q.tokens) {
    t = detail::get_u32(in, offset, "tokenmap");
    if (t >= vocab) throw format_error("tokenmap: token out of vocabulary", offset);
    offset += 4;
  }
  return q;
}

TokenMap load_tokenmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_argument("cannot open token map: " + path);
  return load_tokenmap(in);
}

}  // namespace lbw
