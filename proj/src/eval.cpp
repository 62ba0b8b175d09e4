#include "lbw/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "lbw/detector.hpp"
#include "lbw/parallel.hpp"
#include "lbw/watermark.hpp"

namespace lbw {

double token_consistency(const TokenMap& a, const TokenMap& b) {
  if (a.h != b.h || a.w != b.w || a.vocab_size != b.vocab_size)
    throw invalid_argument("token_consistency: shape or vocab mismatch");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) same += a.tokens[i] == b.tokens[i];
  return static_cast<double>(same) / static_cast<double>(a.tokens.size());
}

double psnr(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    const double d = a.pix[i] - b.pix[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pix.size());
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

// Inclusive-prefix sums with a zero row/column, one table per needed moment.
struct PrefixTable {
  int h = 0, w = 0;
  std::vector<double> sum;
  double box(int r0, int c0, int r1, int c1) const {  // half-open [r0,r1) x [c0,c1)
    const auto at = [&](int r, int c) { return sum[static_cast<std::size_t>(r) * (w + 1) + c]; };
    return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
  }
};

PrefixTable prefix_product(const Image& a, const Image& b, int ch_a, int ch_b) {
  PrefixTable t;
  t.h = a.height;
  t.w = a.width;
  t.sum.assign(static_cast<std::size_t>(t.h + 1) * (t.w + 1), 0.0);
  for (int r = 0; r < t.h; ++r)
    for (int c = 0; c < t.w; ++c) {
      const double v = a.at(r, c, ch_a) * b.at(r, c, ch_b);
      t.sum[static_cast<std::size_t>(r + 1) * (t.w + 1) + (c + 1)] =
          v + t.sum[static_cast<std::size_t>(r) * (t.w + 1) + (c + 1)] +
          t.sum[static_cast<std::size_t>(r + 1) * (t.w + 1) + c] -
          t.sum[static_cast<std::size_t>(r) * (t.w + 1) + c];
    }
  return t;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw invalid_argument("ssim: shape mismatch");
  constexpr int kWin = 8;
  if (a.height < kWin || a.width < kWin)
    throw invalid_argument("ssim: image smaller than the 8x8 window");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const double n = static_cast<double>(kWin) * kWin;

  double channel_sum = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    Image ones(a.height, a.width, 1, 1.0);
    const PrefixTable sx = prefix_product(a, ones, ch, 0);
    const PrefixTable sy = prefix_product(b, ones, ch, 0);
    const PrefixTable sxx = prefix_product(a, a, ch, ch);
    const PrefixTable syy = prefix_product(b, b, ch, ch);
    const PrefixTable sxy = prefix_product(a, b, ch, ch);
    double acc = 0.0;
    std::size_t wins = 0;
    for (int r = 0; r + kWin <= a.height; ++r)
      for (int c = 0; c + kWin <= a.width; ++c) {
        const double mx = sx.box(r, c, r + kWin, c + kWin) / n;
        const double my = sy.box(r, c, r + kWin, c + kWin) / n;
        const double vx = sxx.box(r, c, r + kWin, c + kWin) / n - mx * mx;
        const double vy = syy.box(r, c, r + kWin, c + kWin) / n - my * my;
        const double cov = sxy.box(r, c, r + kWin, c + kWin) / n - mx * my;
        acc += ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
        ++wins;
      }
    channel_sum += acc / static_cast<double>(wins);
  }
  return channel_sum / a.channels;
}

double roc_auc(const ScoreSet& s) {
  if (s.positives.empty() || s.negatives.empty())
    throw invalid_argument("roc_auc: both score sets must be non-empty");
  std::vector<double> neg = s.negatives;
  std::sort(neg.begin(), neg.end());
  double acc = 0.0;
  for (double p : s.positives) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    acc += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return acc / (static_cast<double>(s.positives.size()) * static_cast<double>(neg.size()));
}

double tpr_at_fpr(const ScoreSet& s, double fpr) {
  if (s.positives.empty() || s.negatives.empty())
    throw invalid_argument("tpr_at_fpr: both score sets must be non-empty");
  if (fpr < 0.0 || fpr > 1.0) throw invalid_argument("tpr_at_fpr: fpr must be in [0, 1]");
  std::vector<double> neg = s.negatives;
  std::sort(neg.begin(), neg.end());
  const auto n_neg = static_cast<double>(neg.size());
  const double allowed = fpr * n_neg + 1e-12;

  // Smallest candidate threshold with #(neg > t) <= allowed. Candidates are
  // the negative scores themselves, scanned in ascending order.
  double threshold = neg.back();
  bool found = false;
  for (std::size_t i = 0; i < neg.size() && !found; ++i) {
    if (i + 1 < neg.size() && neg[i + 1] == neg[i]) continue;  // same candidate
    const double above = static_cast<double>(neg.size() - i - 1);
    if (above <= allowed) {
      threshold = neg[i];
      found = true;
    }
  }
  std::size_t tp = 0;
  for (double p : s.positives) tp += p > threshold;
  return static_cast<double>(tp) / static_cast<double>(s.positives.size());
}

namespace {

std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw invalid_argument("spearman_rho: need two same-length series");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0)
    throw invalid_argument("spearman_rho: a series is constant");
  return cov / std::sqrt(vx * vy);
}

std::vector<Image> make_synthetic_corpus(std::size_t count, int h, int w, int channels,
                                         uint64_t seed) {
  if (channels != 1 && channels != 3)
    throw invalid_argument("make_synthetic_corpus: channels must be 1 or 3");
  std::vector<Image> corpus(count);
  parallel_for(count, [&](std::size_t i) {
    Image img(h, w, channels);
    const struct {
      int size;
      double weight;
    } octaves[] = {{4, 0.6}, {8, 0.3}, {16, 0.1}};
    Rng rng(mix_seed(seed, i));
    for (const auto& oct : octaves) {
      FeatureMap grid(std::min(h, oct.size), std::min(w, oct.size), channels);
      for (auto& v : grid.values) v = rng.uniform01();
      const FeatureMap up = interpolate(grid, h, w);
      for (std::size_t k = 0; k < img.pix.size(); ++k)
        img.pix[k] += oct.weight * up.values[k];
    }
    corpus[i] = std::move(img);
  });
  return corpus;
}

std::vector<Image> load_image_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw invalid_argument("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm"))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw invalid_argument("no .pgm/.ppm images in " + dir);
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(read_pnm(f.string()));
  return images;
}

const char* embed_method_name(EmbedMethod m) {
  switch (m) {
    case EmbedMethod::post: return "post";
    case EmbedMethod::hard: return "hard";
    case EmbedMethod::soft: return "soft";
  }
  return "?";
}

namespace {

std::string pipeline_label(const std::vector<AttackSpec>& attacks) {
  if (attacks.empty()) return "clean";
  std::string label;
  for (const auto& a : attacks) {
    if (!label.empty()) label += ";";
    label += attack_kind_name(a.kind);
  }
  return label;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentInputs& in) {
  if (!in.codebook || !in.pool) throw invalid_argument("run_experiment: codebook and pool required");
  if (in.n_images < 2) throw invalid_argument("run_experiment: need at least 2 images");
  if (in.seeds.empty()) throw invalid_argument("run_experiment: need at least one seed");
  const bool needs_corpus =
      in.method == EmbedMethod::post || in.source == SourceKind::bigram;
  if (needs_corpus && (!in.corpus || in.corpus->empty()))
    throw invalid_argument("run_experiment: corpus required for this configuration");
  const Codebook& cb = *in.codebook;
  const GreenListPool& pool = *in.pool;
  if (pool.vocab_size() != cb.vocab_size())
    throw invalid_argument("run_experiment: pool and codebook vocab differ");

  int gen_h = 0, gen_w = 0;
  if (in.method != EmbedMethod::post) {
    if (!in.corpus || in.corpus->empty())
      throw invalid_argument("run_experiment: corpus required to size generated maps");
    gen_h = (*in.corpus)[0].height / in.patch;
    gen_w = (*in.corpus)[0].width / in.patch;
  }

  // The bigram source is fitted once on the quantized corpus.
  std::unique_ptr<LogitSource> source;
  if (in.method != EmbedMethod::post) {
    if (in.source == SourceKind::bigram) {
      std::vector<TokenMap> fitted;
      fitted.reserve(in.corpus->size());
      for (const auto& img : *in.corpus)
        fitted.push_back(quantize(encode(img, in.patch), cb));
      source = std::make_unique<BigramSource>(cb.vocab_size(), fitted);
    } else {
      source = std::make_unique<SeededGaussianSource>(cb.vocab_size(), 17, in.source_spread);
    }
  }

  const bool has_token_attacks =
      std::any_of(in.attacks.begin(), in.attacks.end(),
                  [](const AttackSpec& a) { return is_token_attack(a.kind); });

  ExperimentReport report;
  report.method = embed_method_name(in.method);
  report.attack_label = pipeline_label(in.attacks);

  for (uint64_t run_seed : in.seeds) {
    ScoreSet scores;
    scores.positives.resize(in.n_images);
    scores.negatives.resize(in.n_images);

    parallel_for(2 * in.n_images, [&](std::size_t job) {
      const bool positive = job < in.n_images;
      const std::size_t i = positive ? job : job - in.n_images;
      Rng rng(mix_seed(run_seed, job));
      AttackContext ctx;
      ctx.foreign_codebook = in.foreign_codebook;
      ctx.patch = in.patch;
      ctx.stream = mix_seed(run_seed, job);

      Image x;
      if (in.method == EmbedMethod::post) {
        const Image& base = (*in.corpus)[i % in.corpus->size()];
        if (positive) {
          const auto list = static_cast<uint32_t>(rng.uniform_below(pool.list_count()));
          x = embed_posthoc(base, cb, pool, list, in.patch).image;
        } else {
          x = base;
        }
      } else {
        BiasConfig cfg;
        cfg.temperature = in.temperature;
        if (positive) {
          cfg.mode = in.method == EmbedMethod::hard ? BiasMode::hard : BiasMode::soft;
          cfg.sigma = in.sigma;
          cfg.list_id = static_cast<uint32_t>(rng.uniform_below(pool.list_count()));
        }
        const TokenMap q = generate_watermarked(*source, pool, cfg, gen_h, gen_w,
                                                EmitOrder::raster, rng);
        x = decode(q, cb, in.patch);
      }

      x = apply_pixel_attacks(std::move(x), in.attacks, ctx);
      TokenMap q = quantize(encode(x, in.patch), cb);
      if (has_token_attacks) q = apply_token_attacks(std::move(q), in.attacks, ctx);
      const double z = detect_tokenmap(q, pool, in.z_threshold).z;
      (positive ? scores.positives : scores.negatives)[i] = z;
    });

    SeedOutcome outcome;
    outcome.seed = run_seed;
    outcome.auc = roc_auc(scores);
    outcome.tpr_at_1fpr = tpr_at_fpr(scores, 0.01);
    report.runs.push_back(outcome);
    report.last_scores = std::move(scores);
  }

  for (const auto& r : report.runs) {
    report.mean_auc += r.auc;
    report.mean_tpr += r.tpr_at_1fpr;
  }
  report.mean_auc /= static_cast<double>(report.runs.size());
  report.mean_tpr /= static_cast<double>(report.runs.size());
  return report;
}

std::string ExperimentReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-28s %8s %8s\n", "method", "attack", "AUC",
                "T@1F");
  out << line;
  for (const auto& r : runs) {
    std::snprintf(line, sizeof(line), "%-8s %-28s %8.4f %8.4f  (seed %llu)\n",
                  method.c_str(), attack_label.c_str(), r.auc, r.tpr_at_1fpr,
                  static_cast<unsigned long long>(r.seed));
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-8s %-28s %8.4f %8.4f  (mean of %zu)\n",
                method.c_str(), attack_label.c_str(), mean_auc, mean_tpr, runs.size());
  out << line;
  return out.str();
}

std::string ExperimentReport::to_records() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& r : runs)
    out << "{\"method\":\"" << method << "\",\"attack\":\"" << attack_label
        << "\",\"seed\":" << r.seed << ",\"auc\":" << r.auc
        << ",\"tpr_at_1fpr\":" << r.tpr_at_1fpr << "}\n";
  out << "{\"method\":\"" << method << "\",\"attack\":\"" << attack_label
      << "\",\"seed\":\"mean\",\"auc\":" << mean_auc << ",\"tpr_at_1fpr\":" << mean_tpr
      << "}\n";
  return out.str();
}

std::vector<ObserveRow> observe_codebook_sweep(const Codebook& cb,
                                               const std::vector<Image>& corpus,
                                               int patch,
                                               const std::vector<double>& ratios) {
  if (corpus.empty()) throw invalid_argument("observe_codebook_sweep: empty corpus");
  std::vector<ObserveRow> rows;
  for (double ratio : ratios) {
    if (!(ratio > 0.0) || ratio > 1.0)
      throw invalid_argument("observe_codebook_sweep: ratio must be in (0, 1]");
    const auto keep = std::max<uint32_t>(
        2, static_cast<uint32_t>(std::ceil(ratio * cb.vocab_size())));
    const Codebook reduced = cb.prefix(std::min(keep, cb.vocab_size()));

    ObserveRow row;
    row.ratio = ratio;
    double consistency = 0.0, se = 0.0, ssim_sum = 0.0;
    std::size_t px = 0;
    for (const auto& img : corpus) {
      const TokenMap q1 = quantize(encode(img, patch), reduced);
      const Image recon = decode(q1, reduced, patch);
      const TokenMap q2 = quantize(encode(recon, patch), reduced);
      consistency += token_consistency(q1, q2);
      for (std::size_t k = 0; k < img.pix.size(); ++k) {
        const double d = img.pix[k] - recon.pix[k];
        se += d * d;
      }
      px += img.pix.size();
      ssim_sum += ssim(img, recon);
    }
    row.consistency = consistency / static_cast<double>(corpus.size());
    const double mse = se / static_cast<double>(px);
    row.psnr_db = mse == 0.0 ? std::numeric_limits<double>::infinity()
                             : 10.0 * std::log10(1.0 / mse);
    row.ssim_val = ssim_sum / static_cast<double>(corpus.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lbw
