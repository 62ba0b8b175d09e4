#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lbw/image.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli;  // path to the lbw binary, from argv[1]
fs::path g_dir;     // scratch directory

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args) {
  const fs::path out_file = g_dir / "stdout.txt";
  const fs::path err_file = g_dir / "stderr.txt";
  const std::string cmd =
      g_cli + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  const auto slurp_text = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp_text(out_file);
  r.err = slurp_text(err_file);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size()));
}

std::string path(const std::string& name) { return (g_dir / name).string(); }

}  // namespace

TEST_CASE("corpus, codebook, and pool commands are deterministic") {
  REQUIRE(run("synth-corpus --out " + path("corpus") + " --count 30 --height 32 --width 32 --seed 5")
              .exit_code == 0);
  REQUIRE(fs::exists(g_dir / "corpus" / "img_00000.pgm"));

  const std::string train = "train-codebook --corpus " + path("corpus") +
                            " --patch 4 --vocab 128 --iters 12 --seed 3 --out ";
  REQUIRE(run(train + path("cb.lbwc")).exit_code == 0);
  REQUIRE(run(train + path("cb2.lbwc")).exit_code == 0);
  CHECK(slurp(g_dir / "cb.lbwc") == slurp(g_dir / "cb2.lbwc"));

  const std::string gen = "gen-pool --n 8 --gamma 0.2 --vocab 128 --seed 4 --codebook " +
                          path("cb.lbwc") + " --out ";
  const auto r1 = run(gen + path("pool.lbwg"));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(run(gen + path("pool2.lbwg")).exit_code == 0);
  CHECK(slurp(g_dir / "pool.lbwg") == slurp(g_dir / "pool2.lbwg"));
  CHECK(value_after(r1.out, "max column deviation: ") <= 1.0);
}

TEST_CASE("two-cluster corpus trains to a near-zero objective") {
  // Two constant image families: every patch lands exactly on one of two
  // points, so the optimal 2-means objective is 0.
  fs::create_directories(g_dir / "blobs");
  for (int i = 0; i < 6; ++i) {
    lbw::Image img(16, 16, 1, i % 2 == 0 ? 51.0 / 255.0 : 204.0 / 255.0);
    char name[32];
    std::snprintf(name, sizeof(name), "blob_%02d.pgm", i);
    lbw::write_pnm(img, (g_dir / "blobs" / name).string());
  }
  const auto r = run("train-codebook --corpus " + path("blobs") +
                     " --patch 4 --vocab 2 --iters 10 --seed 1 --out " + path("blob.lbwc"));
  REQUIRE(r.exit_code == 0);
  CHECK(value_after(r.out, "kmeans objective: ") <= 1e-9);
}

TEST_CASE("reference pool parameters satisfy the column bound") {
  const auto r = run("gen-pool --n 32 --gamma 0.1 --vocab 1024 --seed 0 --out " +
                     path("big_pool.lbwg"));
  REQUIRE(r.exit_code == 0);
  CHECK(value_after(r.out, "max column deviation: ") <= 2.0);

  const auto full = run("gen-pool --n 4 --gamma 1.0 --vocab 64 --seed 0 --out " +
                        path("full_pool.lbwg"));
  REQUIRE(full.exit_code == 0);
  CHECK(value_after(full.out, "max column deviation: ") == 0.0);

  // round(gamma*V) = 0 is invalid
  const auto bad = run("gen-pool --n 4 --gamma 0.001 --vocab 10 --seed 0 --out " +
                       path("bad_pool.lbwg"));
  CHECK(bad.exit_code == 4);
  CHECK(!bad.err.empty());
}

TEST_CASE("embed then detect round trip") {
  const std::string base = " --codebook " + path("cb.lbwc") + " --pool " + path("pool.lbwg") +
                           " --patch 4";
  const auto embed = run("embed --mode post" + base + " --in " + path("corpus/img_00003.pgm") +
                         " --out " + path("wm.pgm") + " --tokens-out " + path("wm.lbwt") +
                         " --list-id 2 --seed 9");
  REQUIRE(embed.exit_code == 0);

  const auto hit = run("detect --image " + path("wm.pgm") + base + " --zth 4");
  REQUIRE(hit.exit_code == 0);
  CHECK(hit.out.find("\"decision\":true") != std::string::npos);
  CHECK(hit.out.find("\"best_list\":2") != std::string::npos);

  const auto clean = run("detect --image " + path("corpus/img_00003.pgm") + base + " --zth 4");
  REQUIRE(clean.exit_code == 0);
  CHECK(clean.out.find("\"decision\":false") != std::string::npos);

  const auto tokens = run("detect --tokens " + path("wm.lbwt") + " --pool " + path("pool.lbwg") +
                          " --zth 4");
  REQUIRE(tokens.exit_code == 0);
  CHECK(tokens.out.find("\"decision\":true") != std::string::npos);

  // Hard-mode generation without an input image.
  const auto hard = run("embed --mode hard" + base + " --source gaussian --height 8 --width 8" +
                        " --list-id 1 --seed 10 --tokens-out " + path("hard.lbwt"));
  REQUIRE(hard.exit_code == 0);
  const auto hard_hit = run("detect --tokens " + path("hard.lbwt") + " --pool " +
                            path("pool.lbwg") + " --zth 4");
  CHECK(hard_hit.out.find("\"best_list\":1") != std::string::npos);
  CHECK(hard_hit.out.find("\"decision\":true") != std::string::npos);
}

TEST_CASE("attack command is deterministic and respects domains") {
  const std::string pipe = "gauss_noise:var=0.02,seed=7;box_blur:k=3";
  const auto a1 = run("attack --in " + path("wm.pgm") + " --out " + path("att1.pgm") +
                      " --pipeline \"" + pipe + "\"");
  REQUIRE(a1.exit_code == 0);
  REQUIRE(run("attack --in " + path("wm.pgm") + " --out " + path("att2.pgm") +
              " --pipeline \"" + pipe + "\"")
              .exit_code == 0);
  CHECK(slurp(g_dir / "att1.pgm") == slurp(g_dir / "att2.pgm"));

  const auto tok = run("attack --in-tokens " + path("wm.lbwt") + " --out-tokens " +
                       path("flip.lbwt") + " --pipeline token_flip:p=0.5,seed=3");
  REQUIRE(tok.exit_code == 0);

  // Token attacks cannot run on images and vice versa.
  CHECK(run("attack --in " + path("wm.pgm") + " --out " + path("x.pgm") +
            " --pipeline token_flip:p=0.5")
            .exit_code == 4);
  CHECK(run("attack --in-tokens " + path("wm.lbwt") + " --out-tokens " + path("x.lbwt") +
            " --pipeline box_blur:k=3")
            .exit_code == 4);
}

TEST_CASE("eval command runs a config and reproduces identical records") {
  {
    std::ofstream cfg(g_dir / "exp.cfg");
    cfg << "codebook=" << path("cb.lbwc") << "\n"
        << "pool=" << path("pool.lbwg") << "\n"
        << "corpus=" << path("corpus") << "\n"
        << "patch=4\nmode=post\nn_images=24\nseeds=1,2\n"
        << "attack=token_flip:p=0.2,seed=3\n"
        << "# comment line\n";
  }
  const auto r1 = run("eval --config " + path("exp.cfg") + " --out " + path("rep1"));
  REQUIRE(r1.exit_code == 0);
  CHECK(r1.out.find("post") != std::string::npos);
  CHECK(r1.out.find("token_flip") != std::string::npos);
  const auto r2 = run("eval --config " + path("exp.cfg") + " --out " + path("rep2"));
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(g_dir / "rep1" / "records.jsonl") == slurp(g_dir / "rep2" / "records.jsonl"));
  CHECK(!slurp(g_dir / "rep1" / "report.txt").empty());
}

TEST_CASE("observe sweeps report consistency and quality trends") {
  const auto c = run("observe --experiment token-consistency --codebook " + path("cb.lbwc") +
                     " --corpus " + path("corpus") + " --patch 4 --ratios 0.25,1.0");
  REQUIRE(c.exit_code == 0);
  std::istringstream lines(c.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("consistency") != std::string::npos);
  double ratio, consistency;
  lines >> ratio >> consistency;
  CHECK(consistency == doctest::Approx(1.0));

  const auto q = run("observe --experiment codebook-reduction --codebook " + path("cb.lbwc") +
                     " --corpus " + path("corpus") + " --patch 4 --ratios 0.25,1.0 --out " +
                     path("observe.txt"));
  REQUIRE(q.exit_code == 0);
  std::istringstream qlines(q.out);
  std::getline(qlines, header);
  double r1, p1, s1, r2, p2, s2;
  qlines >> r1 >> p1 >> s1 >> r2 >> p2 >> s2;
  CHECK(r1 == doctest::Approx(0.25));
  CHECK(p1 <= p2);  // psnr non-increasing as the ratio drops
  CHECK(slurp(g_dir / "observe.txt") == q.out);
}

TEST_CASE("calibrate prints a threshold") {
  const auto r = run("calibrate --pool " + path("pool.lbwg") +
                     " --hw 64 --target-fpr 0.01 --trials 5000 --seed 3");
  REQUIRE(r.exit_code == 0);
  CHECK(value_after(r.out, "z threshold: ") > 1.0);
}

TEST_CASE("seed falls back to the LBW_SEED environment variable") {
  const std::string gen = "gen-pool --n 4 --gamma 0.25 --vocab 64 --out ";
  REQUIRE(run(gen + path("seed_pool.lbwg") + " --seed 7").exit_code == 0);
  const int status = std::system(("env LBW_SEED=7 " + g_cli + " " + gen +
                                  path("env_pool.lbwg") + " >/dev/null 2>&1")
                                     .c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  CHECK(slurp(g_dir / "env_pool.lbwg") == slurp(g_dir / "seed_pool.lbwg"));
}

TEST_CASE("usage and file errors map to distinct exit codes") {
  CHECK(run("detect --no-such-flag").exit_code == 2);
  CHECK(run("nonsense-command").exit_code == 2);

  const auto missing = run("train-codebook --corpus " + path("nowhere") +
                           " --vocab 16 --out " + path("x.lbwc"));
  CHECK(missing.exit_code == 4);
  CHECK(missing.err.find("lbw:") != std::string::npos);

  // A token map is not a pool: format error.
  const auto bad = run("detect --tokens " + path("wm.lbwt") + " --pool " + path("wm.lbwt") +
                       " --zth 4");
  CHECK(bad.exit_code == 3);
}

int cli_main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-lbw-binary> [doctest args]\n");
    return 1;
  }
  g_cli = argv[1];
  g_dir = fs::temp_directory_path() / "lbw_cli_tests";
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);

  doctest::Context context(argc - 1, argv + 1);
  const int rc = context.run();
  fs::remove_all(g_dir);
  return rc;
}

int main(int argc, char** argv) { return cli_main(argc, argv); }
