// lbw: lexical-bias watermarking toolkit for token-quantized images.
//
// Exit codes: 0 success, 2 usage error, 3 file format error,
// 4 invalid argument. Detection decisions are carried in the output record,
// not the exit code.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lbw/attacks.hpp"
#include "lbw/codebook.hpp"
#include "lbw/detector.hpp"
#include "lbw/eval.hpp"
#include "lbw/greenlist.hpp"
#include "lbw/image.hpp"
#include "lbw/quantizer.hpp"
#include "lbw/watermark.hpp"

namespace {

uint64_t env_default_seed() {
  if (const char* env = std::getenv("LBW_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) seeds.push_back(std::strtoull(item.c_str(), nullptr, 10));
  if (seeds.empty()) throw lbw::invalid_argument("empty seed list");
  return seeds;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lbw::invalid_argument("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw lbw::invalid_argument("config line is not key=value: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> ratios;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) ratios.push_back(std::stod(item));
  if (ratios.empty()) throw lbw::invalid_argument("empty ratio list");
  return ratios;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lexical-bias watermarking toolkit for token-quantized images"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress informational output");

  // ---- synth-corpus ----
  auto* synth = app.add_subcommand("synth-corpus", "write a synthetic image corpus");
  struct {
    std::string out;
    std::size_t count = 100;
    int height = 64, width = 64, channels = 1;
    uint64_t seed = env_default_seed();
  } sc;
  synth->add_option("--out", sc.out, "output directory")->required();
  synth->add_option("--count", sc.count, "number of images");
  synth->add_option("--height", sc.height, "image height");
  synth->add_option("--width", sc.width, "image width");
  synth->add_option("--channels", sc.channels, "1 (pgm) or 3 (ppm)");
  synth->add_option("--seed", sc.seed, "rng seed");
  synth->callback([&] {
    std::filesystem::create_directories(sc.out);
    const auto corpus =
        lbw::make_synthetic_corpus(sc.count, sc.height, sc.width, sc.channels, sc.seed);
    char name[64];
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      std::snprintf(name, sizeof(name), "img_%05zu.%s", i,
                    sc.channels == 3 ? "ppm" : "pgm");
      lbw::write_pnm(corpus[i], (std::filesystem::path(sc.out) / name).string());
    }
    if (!quiet) std::cout << "wrote " << corpus.size() << " images to " << sc.out << "\n";
  });

  // ---- train-codebook ----
  auto* train = app.add_subcommand("train-codebook", "fit a codebook with k-means");
  struct {
    std::string corpus, out;
    int patch = 4;
    uint32_t vocab = 1024;
    int iters = 25;
    uint64_t seed = env_default_seed();
  } tc;
  train->add_option("--corpus", tc.corpus, "directory of .pgm/.ppm images")->required();
  train->add_option("--patch", tc.patch, "patch size");
  train->add_option("--vocab", tc.vocab, "codebook size V")->required();
  train->add_option("--iters", tc.iters, "max k-means iterations");
  train->add_option("--seed", tc.seed, "rng seed");
  train->add_option("--out", tc.out, "output .lbwc file")->required();
  train->callback([&] {
    const auto images = lbw::load_image_dir(tc.corpus);
    const auto corpus = lbw::build_patch_corpus(images, tc.patch);
    double sse = 0.0;
    const auto cb = lbw::train_codebook(corpus, tc.vocab, tc.iters, tc.seed, &sse);
    lbw::save_codebook(cb, tc.out);
    std::cout << "kmeans objective: " << sse << "\n";
    if (!quiet)
      std::cout << "codebook: V=" << cb.vocab_size() << " C=" << cb.dim() << " id="
                << cb.id() << "\n";
  });

  // ---- gen-pool ----
  auto* genpool = app.add_subcommand("gen-pool", "generate a green-list pool");
  struct {
    uint32_t n = 32;
    double gamma = 0.1;
    uint32_t vocab = 1024;
    uint64_t seed = env_default_seed();
    int iters = 1000;
    std::string out, codebook;
  } gp;
  genpool->add_option("--n", gp.n, "number of green lists");
  genpool->add_option("--gamma", gp.gamma, "green token ratio in (0,1]")->required();
  genpool->add_option("--vocab", gp.vocab, "vocabulary size V")->required();
  genpool->add_option("--seed", gp.seed, "rng seed");
  genpool->add_option("--iters", gp.iters, "max repair sweeps");
  genpool->add_option("--codebook", gp.codebook, "bind the pool to this codebook");
  genpool->add_option("--out", gp.out, "output .lbwg file")->required();
  genpool->callback([&] {
    uint64_t cb_id = 0;
    if (!gp.codebook.empty()) cb_id = lbw::load_codebook(gp.codebook).id();
    const auto pool =
        lbw::generate_green_matrix(gp.n, gp.gamma, gp.vocab, gp.seed, gp.iters, cb_id);
    lbw::save_pool(pool, gp.out);
    const auto report = lbw::validate_pool(pool);
    std::cout << "max column deviation: " << report.max_col_dev << "\n";
    if (!quiet)
      std::cout << "pool: N=" << pool.list_count() << " V=" << pool.vocab_size()
                << " green_size=" << pool.green_size() << " id=" << pool.pool_id()
                << "\n";
  });

  // ---- embed ----
  auto* embed = app.add_subcommand("embed", "embed a watermark");
  struct {
    std::string mode = "post";
    std::string codebook, pool, in, out, tokens_out, corpus;
    std::string list_id = "random";
    std::string source = "bigram";
    int patch = 4;
    int height = 16, width = 16;
    double sigma = 4.0, temperature = 1.0, spread = 2.0;
    uint64_t seed = env_default_seed();
    uint64_t source_seed = 17;
  } em;
  embed->add_option("--mode", em.mode, "post | hard | soft")
      ->check(CLI::IsMember({"post", "hard", "soft"}));
  embed->add_option("--codebook", em.codebook, ".lbwc file")->required();
  embed->add_option("--pool", em.pool, ".lbwg file")->required();
  embed->add_option("--patch", em.patch, "patch size");
  embed->add_option("--list-id", em.list_id, "list index or 'random'");
  embed->add_option("--seed", em.seed, "rng seed (sampling and list choice)");
  embed->add_option("--in", em.in, "input image (post mode)");
  embed->add_option("--out", em.out, "output watermarked image");
  embed->add_option("--tokens-out", em.tokens_out, "also write the token map");
  embed->add_option("--height", em.height, "token grid height (hard/soft)");
  embed->add_option("--width", em.width, "token grid width (hard/soft)");
  embed->add_option("--sigma", em.sigma, "soft bias constant");
  embed->add_option("--temperature", em.temperature, "sampling temperature");
  embed->add_option("--source", em.source, "bigram | gaussian (hard/soft)")
      ->check(CLI::IsMember({"bigram", "gaussian"}));
  embed->add_option("--corpus", em.corpus, "corpus dir to fit the bigram source");
  embed->add_option("--source-seed", em.source_seed, "gaussian source seed");
  embed->add_option("--spread", em.spread, "gaussian source spread");
  embed->callback([&] {
    const auto cb = lbw::load_codebook(em.codebook);
    const auto pool = lbw::load_pool(em.pool);
    lbw::Rng rng(em.seed);
    uint32_t list = 0;
    if (em.list_id == "random") {
      list = static_cast<uint32_t>(rng.uniform_below(pool.list_count()));
    } else {
      std::size_t used = 0;
      try {
        list = static_cast<uint32_t>(std::stoul(em.list_id, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != em.list_id.size())
        throw lbw::invalid_argument("--list-id must be an index or 'random': " + em.list_id);
    }
    if (!quiet) std::cout << "list id: " << list << "\n";

    lbw::Image out_img;
    lbw::TokenMap out_tokens;
    if (em.mode == "post") {
      if (em.in.empty()) throw lbw::invalid_argument("post mode requires --in");
      auto result = lbw::embed_posthoc(lbw::read_pnm(em.in), cb, pool, list, em.patch);
      out_img = std::move(result.image);
      out_tokens = std::move(result.tokens);
    } else {
      std::unique_ptr<lbw::LogitSource> src;
      if (em.source == "bigram") {
        if (em.corpus.empty())
          throw lbw::invalid_argument("bigram source requires --corpus");
        std::vector<lbw::TokenMap> fitted;
        for (const auto& img : lbw::load_image_dir(em.corpus))
          fitted.push_back(lbw::quantize(lbw::encode(img, em.patch), cb));
        src = std::make_unique<lbw::BigramSource>(cb.vocab_size(), fitted);
      } else {
        src = std::make_unique<lbw::SeededGaussianSource>(cb.vocab_size(),
                                                          em.source_seed, em.spread);
      }
      lbw::BiasConfig cfg;
      cfg.mode = em.mode == "hard" ? lbw::BiasMode::hard : lbw::BiasMode::soft;
      cfg.sigma = em.sigma;
      cfg.list_id = list;
      cfg.temperature = em.temperature;
      out_tokens = lbw::generate_watermarked(*src, pool, cfg, em.height, em.width,
                                             lbw::EmitOrder::raster, rng);
      out_img = lbw::decode(out_tokens, cb, em.patch);
    }
    if (!em.out.empty()) lbw::write_pnm(out_img, em.out);
    if (!em.tokens_out.empty()) lbw::save_tokenmap(out_tokens, em.tokens_out);
    if (em.out.empty() && em.tokens_out.empty())
      throw lbw::invalid_argument("embed: nothing to write, give --out or --tokens-out");
  });

  // ---- detect ----
  auto* detect = app.add_subcommand("detect", "test an image or token map for the watermark");
  struct {
    std::string image, tokens, codebook, pool, scales;
    int patch = 4;
    double zth = 4.0;
  } dt;
  detect->add_option("--image", dt.image, "input image");
  detect->add_option("--tokens", dt.tokens, "input token map (.lbwt)");
  detect->add_option("--codebook", dt.codebook, ".lbwc file (image input)");
  detect->add_option("--pool", dt.pool, ".lbwg file")->required();
  detect->add_option("--patch", dt.patch, "patch size");
  detect->add_option("--zth", dt.zth, "decision threshold on z");
  detect->add_option("--scales", dt.scales, "multiscale schedule, e.g. 1x1,2x2,4x4");
  detect->callback([&] {
    const auto pool = lbw::load_pool(dt.pool);
    lbw::DetectionResult result;
    if (!dt.tokens.empty()) {
      result = lbw::detect_tokenmap(lbw::load_tokenmap(dt.tokens), pool, dt.zth);
    } else if (!dt.image.empty()) {
      if (dt.codebook.empty())
        throw lbw::invalid_argument("detect on an image requires --codebook");
      const auto cb = lbw::load_codebook(dt.codebook);
      const auto img = lbw::read_pnm(dt.image);
      if (dt.scales.empty()) {
        result = lbw::detect_image(img, cb, pool, dt.patch, dt.zth);
      } else {
        result = lbw::detect_image_multiscale(
            img, cb, pool, dt.patch, lbw::parse_scale_schedule(dt.scales), dt.zth);
      }
    } else {
      throw lbw::invalid_argument("detect: give --image or --tokens");
    }
    std::cout << result.to_record() << "\n";
  });

  // ---- attack ----
  auto* attack = app.add_subcommand("attack", "apply an attack pipeline");
  struct {
    std::string in, out, in_tokens, out_tokens, pipeline, foreign_codebook;
    int patch = 4;
  } at;
  attack->add_option("--in", at.in, "input image");
  attack->add_option("--out", at.out, "output image");
  attack->add_option("--in-tokens", at.in_tokens, "input token map");
  attack->add_option("--out-tokens", at.out_tokens, "output token map");
  attack->add_option("--pipeline", at.pipeline, "e.g. gauss_noise:var=0.1,seed=7;box_blur:k=8")
      ->required();
  attack->add_option("--foreign-codebook", at.foreign_codebook,
                     "codebook for foreign_requantize");
  attack->add_option("--patch", at.patch, "patch size for foreign_requantize");
  attack->callback([&] {
    const auto pipeline = lbw::parse_attack_pipeline(at.pipeline);
    lbw::AttackContext ctx;
    ctx.patch = at.patch;
    std::unique_ptr<lbw::Codebook> foreign;
    if (!at.foreign_codebook.empty()) {
      foreign = std::make_unique<lbw::Codebook>(lbw::load_codebook(at.foreign_codebook));
      ctx.foreign_codebook = foreign.get();
    }
    const bool image_mode = !at.in.empty();
    const bool token_mode = !at.in_tokens.empty();
    if (image_mode == token_mode)
      throw lbw::invalid_argument("attack: give exactly one of --in / --in-tokens");
    if (image_mode) {
      for (const auto& s : pipeline)
        if (lbw::is_token_attack(s.kind))
          throw lbw::invalid_argument("token attacks cannot run on an image input");
      if (at.out.empty()) throw lbw::invalid_argument("attack: --out required");
      lbw::write_pnm(lbw::apply_pixel_attacks(lbw::read_pnm(at.in), pipeline, ctx), at.out);
    } else {
      for (const auto& s : pipeline)
        if (!lbw::is_token_attack(s.kind))
          throw lbw::invalid_argument("pixel attacks cannot run on a token-map input");
      if (at.out_tokens.empty()) throw lbw::invalid_argument("attack: --out-tokens required");
      lbw::save_tokenmap(
          lbw::apply_token_attacks(lbw::load_tokenmap(at.in_tokens), pipeline, ctx),
          at.out_tokens);
    }
  });

  // ---- calibrate ----
  auto* calibrate = app.add_subcommand("calibrate", "Monte-Carlo z threshold for a pool");
  struct {
    std::string pool;
    int64_t hw = 256;
    double target_fpr = 0.01;
    std::size_t trials = 100000;
    uint64_t seed = env_default_seed();
  } ca;
  calibrate->add_option("--pool", ca.pool, ".lbwg file")->required();
  calibrate->add_option("--hw", ca.hw, "token map size (h*w)");
  calibrate->add_option("--target-fpr", ca.target_fpr, "target false positive rate");
  calibrate->add_option("--trials", ca.trials, "null simulations");
  calibrate->add_option("--seed", ca.seed, "rng seed");
  calibrate->callback([&] {
    const auto pool = lbw::load_pool(ca.pool);
    lbw::Rng rng(ca.seed);
    std::cout << "z threshold: "
              << lbw::calibrate_threshold(pool, ca.hw, ca.target_fpr, ca.trials, rng)
              << "\n";
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "run a watermark/attack experiment");
  struct {
    std::string config;
    std::string out_dir;
  } ev;
  eval_cmd->add_option("--config", ev.config, "key=value experiment file")->required();
  eval_cmd->add_option("--out", ev.out_dir, "override output directory");
  eval_cmd->callback([&] {
    auto kv = parse_config_file(ev.config);
    const auto get = [&](const std::string& key, const std::string& fallback) {
      auto it = kv.find(key);
      return it == kv.end() ? fallback : it->second;
    };
    const auto require = [&](const std::string& key) {
      auto it = kv.find(key);
      if (it == kv.end()) throw lbw::invalid_argument("config missing key: " + key);
      return it->second;
    };

    const auto cb = lbw::load_codebook(require("codebook"));
    const auto pool = lbw::load_pool(require("pool"));
    const auto corpus = lbw::load_image_dir(require("corpus"));
    std::unique_ptr<lbw::Codebook> foreign;

    lbw::ExperimentInputs in;
    in.codebook = &cb;
    in.pool = &pool;
    in.corpus = &corpus;
    in.patch = std::stoi(get("patch", "4"));
    const std::string mode = get("mode", "post");
    if (mode == "post") in.method = lbw::EmbedMethod::post;
    else if (mode == "hard") in.method = lbw::EmbedMethod::hard;
    else if (mode == "soft") in.method = lbw::EmbedMethod::soft;
    else throw lbw::invalid_argument("config mode must be post|hard|soft");
    in.sigma = std::stod(get("sigma", "4"));
    in.temperature = std::stod(get("temperature", "1"));
    in.source = get("source", "bigram") == "gaussian" ? lbw::SourceKind::gaussian
                                                      : lbw::SourceKind::bigram;
    in.source_spread = std::stod(get("spread", "2"));
    in.attacks = lbw::parse_attack_pipeline(get("attack", ""));
    if (!get("foreign_codebook", "").empty()) {
      foreign = std::make_unique<lbw::Codebook>(lbw::load_codebook(kv["foreign_codebook"]));
      in.foreign_codebook = foreign.get();
    }
    in.n_images = static_cast<std::size_t>(std::stoul(get("n_images", "100")));
    in.seeds = parse_seed_list(get("seeds", "1,2,3,4,5"));
    in.z_threshold = std::stod(get("zth", "4"));

    const auto report = lbw::run_experiment(in);
    std::cout << report.to_table();
    const std::string out_dir = !ev.out_dir.empty() ? ev.out_dir : get("out", "");
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      std::ofstream table(std::filesystem::path(out_dir) / "report.txt");
      table << report.to_table();
      std::ofstream records(std::filesystem::path(out_dir) / "records.jsonl");
      records << report.to_records();
      if (!quiet) std::cout << "wrote report to " << out_dir << "\n";
    }
  });

  // ---- observe ----
  auto* observe = app.add_subcommand("observe", "codebook-ratio sweeps");
  struct {
    std::string experiment = "token-consistency";
    std::string codebook, corpus, out;
    int patch = 4;
    std::string ratios = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  } ob;
  observe->add_option("--experiment", ob.experiment, "token-consistency | codebook-reduction")
      ->check(CLI::IsMember({"token-consistency", "codebook-reduction"}));
  observe->add_option("--codebook", ob.codebook, ".lbwc file")->required();
  observe->add_option("--corpus", ob.corpus, "directory of images")->required();
  observe->add_option("--patch", ob.patch, "patch size");
  observe->add_option("--ratios", ob.ratios, "comma-separated retained ratios");
  observe->add_option("--out", ob.out, "also write the table to this file");
  observe->callback([&] {
    const auto cb = lbw::load_codebook(ob.codebook);
    const auto corpus = lbw::load_image_dir(ob.corpus);
    const auto rows =
        lbw::observe_codebook_sweep(cb, corpus, ob.patch, parse_ratio_list(ob.ratios));
    std::ostringstream table;
    char line[128];
    if (ob.experiment == "token-consistency") {
      table << "ratio  consistency\n";
      for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%.3f  %.6f\n", r.ratio, r.consistency);
        table << line;
      }
    } else {
      table << "ratio  psnr_db  ssim\n";
      for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%.3f  %.4f  %.6f\n", r.ratio, r.psnr_db,
                      r.ssim_val);
        table << line;
      }
    }
    std::cout << table.str();
    if (!ob.out.empty()) {
      std::ofstream out(ob.out);
      out << table.str();
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lbw::format_error& e) {
    std::cerr << "lbw: " << e.what() << "\n";
    return 3;
  } catch (const lbw::invalid_argument& e) {
    std::cerr << "lbw: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "lbw: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
