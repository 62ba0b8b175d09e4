#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbw/attacks.hpp"
#include "lbw/codebook.hpp"
#include "lbw/greenlist.hpp"
#include "lbw/image.hpp"
#include "lbw/quantizer.hpp"

namespace lbw {

struct ScoreSet {
  std::vector<double> positives;  // watermarked-image scores
  std::vector<double> negatives;  // clean-image scores
};

// Fraction of positions where the maps agree.
double token_consistency(const TokenMap& a, const TokenMap& b);

// 10*log10(1/MSE) on unit dynamic range; +infinity for identical inputs.
double psnr(const Image& a, const Image& b);

// Single-scale SSIM: sliding 8x8 uniform windows fully inside the image,
// population moments, C1 = 0.01^2, C2 = 0.03^2, averaged per channel.
double ssim(const Image& a, const Image& b);

// Mann-Whitney AUC: P(pos > neg) + 0.5 * P(pos = neg).
double roc_auc(const ScoreSet& s);

// TPR at the smallest threshold whose empirical FPR is <= fpr (decision rule
// score > threshold).
double tpr_at_fpr(const ScoreSet& s, double fpr);

// Spearman rank correlation with midranks for ties.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// Smooth random images: weighted sum of bilinearly upsampled uniform-noise
// octaves, values already in [0, 1].
std::vector<Image> make_synthetic_corpus(std::size_t count, int h, int w, int channels,
                                         uint64_t seed);

// All .pgm/.ppm files of a directory in filename order.
std::vector<Image> load_image_dir(const std::string& dir);

enum class EmbedMethod { post, hard, soft };
enum class SourceKind { bigram, gaussian };

const char* embed_method_name(EmbedMethod m);

// One watermarking method against one attack pipeline. Per run seed the
// harness embeds n_images watermarked and n_images clean images, pushes both
// through the pipeline, detects, and aggregates ROC-AUC and TPR@1%FPR.
struct ExperimentInputs {
  const Codebook* codebook = nullptr;
  const GreenListPool* pool = nullptr;
  const std::vector<Image>* corpus = nullptr;  // post mode and bigram fitting
  int patch = 4;
  EmbedMethod method = EmbedMethod::post;
  double sigma = 4.0;        // soft mode
  double temperature = 1.0;  // in-generation sampling
  SourceKind source = SourceKind::bigram;
  double source_spread = 2.0;  // gaussian source
  std::vector<AttackSpec> attacks;
  const Codebook* foreign_codebook = nullptr;
  std::size_t n_images = 100;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  double z_threshold = 4.0;  // recorded in detection output; ROC uses raw z
};

struct SeedOutcome {
  uint64_t seed = 0;
  double auc = 0.0;
  double tpr_at_1fpr = 0.0;
};

struct ExperimentReport {
  std::string method;
  std::string attack_label;
  std::vector<SeedOutcome> runs;
  double mean_auc = 0.0;
  double mean_tpr = 0.0;
  ScoreSet last_scores;  // scores of the final seed, for inspection

  std::string to_table() const;
  std::string to_records() const;  // one JSON object per line
};

ExperimentReport run_experiment(const ExperimentInputs& in);

struct ObserveRow {
  double ratio = 0.0;
  double consistency = 0.0;
  double psnr_db = 0.0;  // pooled-MSE PSNR over the corpus
  double ssim_val = 0.0;
};

// Reconstruction sweep over retained-vocabulary ratios; each step keeps the
// first ceil(ratio * V) codebook rows.
std::vector<ObserveRow> observe_codebook_sweep(const Codebook& cb,
                                               const std::vector<Image>& corpus,
                                               int patch,
                                               const std::vector<double>& ratios);

}  // namespace lbw
