#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tmlkit/experiment.hpp"

using namespace tml;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name)
      : path(fs::path("exp_scratch") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
};

ExperimentConfig tiny_config(const ScratchDir& dir) {
  auto cfg = default_config();
  cfg.family = Family::MLP;
  cfg.dataset_dir = dir.str("data");
  cfg.out_dir = dir.str("out");
  cfg.resize_hw = 16;
  cfg.hidden = 24;
  cfg.train_limit = 150;
  cfg.test_limit = 60;
  cfg.synth_train_count = 240;
  cfg.synth_test_count = 90;
  cfg.train.iterations = 40;
  cfg.train.batch = 32;
  cfg.stitch.iterations = 10;
  cfg.stitch.batch = 32;
  cfg.seeds_raw = {1, 2, 3};
  cfg.seeds_pi = {4, 5, 6};
  cfg.validate();
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("stitch pairs cover every kind with the mandated counts") {
  auto pairs = stitch_pair_specs(4);
  REQUIRE(pairs.size() == 14);
  std::map<std::string, int> counts;
  for (const auto& p : pairs) counts[p.kind]++;
  CHECK(counts["pi-pi"] == 3);
  CHECK(counts["pi-raw"] == 4);
  CHECK(counts["raw-pi"] == 4);
  CHECK(counts["raw-raw"] == 3);

  CHECK(pairs[0] == PairSpec{"pi-pi", "pi", "pi", 0, 1});
  CHECK(pairs[2] == PairSpec{"pi-pi", "pi", "pi", 2, 3});
  CHECK(pairs[3] == PairSpec{"pi-raw", "pi", "raw", 0, 0});
  CHECK(pairs[6] == PairSpec{"pi-raw", "pi", "raw", 3, 3});
  CHECK(pairs[7] == PairSpec{"raw-pi", "raw", "pi", 0, 0});
  CHECK(pairs[13] == PairSpec{"raw-raw", "raw", "raw", 2, 3});
}

TEST_CASE("cka pairs skip the redundant cross direction") {
  auto pairs = cka_pair_specs(4);
  REQUIRE(pairs.size() == 10);
  std::map<std::string, int> counts;
  for (const auto& p : pairs) counts[p.kind]++;
  CHECK(counts["pi-pi"] == 3);
  CHECK(counts["pi-raw"] == 4);
  CHECK(counts["raw-raw"] == 3);
  CHECK(counts.count("raw-pi") == 0);

  CHECK(stitch_pair_specs(2).size() == 6);
  CHECK(cka_pair_specs(2).size() == 4);
  CHECK(stitch_pair_specs(3).size() == 10);
}

TEST_CASE("prep synthesizes, filters, and aligns both views") {
  ScratchDir dir("prep");
  auto cfg = tiny_config(dir);
  auto data = run_prep(cfg);

  CHECK(data.raw_train.channels == 3);
  CHECK(data.raw_train.height == 16);
  CHECK(data.pi_train.channels == 2);
  CHECK(data.pi_train.height == 16);
  CHECK(data.raw_train.size() == 150);
  CHECK(data.raw_test.size() == 60);
  CHECK(data.pi_train.labels == data.raw_train.labels);
  CHECK(data.pi_test.labels == data.raw_test.labels);
  for (int32_t l : data.raw_train.labels) {
    CHECK(l >= 0);
    CHECK(l < 3);
  }
  CHECK(fs::exists(dir.str("out") + "/cache/pi_train.pich"));
  CHECK(fs::exists(dir.str("data") + "/train-images-idx3-ubyte"));

  auto again = run_prep(cfg);
  CHECK(again.pi_train.images == data.pi_train.images);
  CHECK(again.raw_train.images == data.raw_train.images);
}

TEST_CASE("a stale persistence-image cache is recomputed") {
  ScratchDir dir("stale");
  auto cfg = tiny_config(dir);
  auto data = run_prep(cfg);

  auto other = cfg;
  other.pi.sigma = 0.01;
  auto recomputed = run_prep(other);
  CHECK(recomputed.pi_train.images != data.pi_train.images);

  auto back = run_prep(cfg);
  CHECK(back.pi_train.images == data.pi_train.images);
}

TEST_CASE("training grid writes checkpoints and reuses them") {
  ScratchDir dir("train");
  auto cfg = tiny_config(dir);
  auto data = run_prep(cfg);
  auto models = run_train(cfg, data);

  REQUIRE(models.size() == 6);
  for (const auto& t : models) {
    CHECK(t.ok);
    CHECK(t.model.train_accuracy > 1.0 / 3.0);
    CHECK(fs::exists(dir.str("out") + "/models/" + t.id + ".ckpt"));
  }
  CHECK(models[0].id == "raw_s1");
  CHECK(models[3].id == "pi_s4");

  auto csv = slurp(dir.str("out") + "/models.csv");
  CHECK(csv.find("model_id,input_kind,family,seed,status") == 0);
  CHECK(csv.find("raw_s1,raw,mlp,1,trained,") != std::string::npos);
  CHECK(csv.find("failed") == std::string::npos);

  auto reused = run_train(cfg, data);
  for (size_t i = 0; i < models.size(); ++i) {
    CHECK(reused[i].model.test_accuracy == models[i].model.test_accuracy);
    CHECK(reused[i].model.seed == models[i].model.seed);
  }

  {
    std::ofstream f(dir.str("out") + "/models/raw_s1.ckpt",
                    std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  auto retrained = run_train(cfg, data);
  CHECK(retrained[0].ok);
  CHECK(retrained[0].model.test_accuracy == models[0].model.test_accuracy);
}

TEST_CASE("comparison matrices have the mandated layout") {
  ScratchDir dir("matrix");
  auto cfg = tiny_config(dir);
  auto data = run_prep(cfg);
  auto models = run_train(cfg, data);

  auto stitch_rows = run_stitch_matrix(cfg, models, data);
  REQUIRE(stitch_rows.size() == 5 * 4);  // 4 kinds + self, 4 cuts each
  for (const auto& r : stitch_rows) {
    CHECK(r.metric == "stitch");
    CHECK(r.cut >= 1);
    CHECK(r.cut <= 4);
    int expect = r.kind == "self" ? 1
                 : (r.kind == "pi-raw" || r.kind == "raw-pi") ? 3
                                                              : 2;
    CHECK(r.n_pairs == expect);
    CHECK(static_cast<int>(r.values.size()) == expect);
    for (double v : r.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(std::isfinite(r.mean));
  }

  double base = models[0].model.test_accuracy;
  for (const auto& r : stitch_rows)
    if (r.kind == "self") CHECK(r.mean >= base - 0.05);

  auto cka_rows = run_cka_matrix(cfg, models, data);
  REQUIRE(cka_rows.size() == 4 * 4);  // 3 kinds + self, 4 cuts each
  for (const auto& r : cka_rows) {
    CHECK(r.metric == "cka");
    if (r.kind == "self") {
      CHECK_THAT(r.mean, Catch::Matchers::WithinAbs(1.0, 1e-12));
    } else {
      CHECK(r.mean > 0.0);
      CHECK(r.mean <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("an untrained model degrades its pairs to nan") {
  ScratchDir dir("failed");
  auto cfg = tiny_config(dir);
  auto data = run_prep(cfg);
  auto models = run_train(cfg, data);
  auto& broken = detail::model_at(models, "pi", 1, cfg);
  broken.ok = false;

  auto rows = run_cka_matrix(cfg, models, data);
  for (const auto& r : rows) {
    if (r.kind == "pi-pi") {
      CHECK(r.n_pairs == 0);  // both consecutive pairs touch pi index 1
      CHECK(std::isnan(r.mean));
    } else if (r.kind == "pi-raw") {
      CHECK(r.n_pairs == 2);
      CHECK(std::isfinite(r.mean));
      int nan_count = 0;
      for (double v : r.values) nan_count += std::isnan(v) ? 1 : 0;
      CHECK(nan_count == 1);
    } else if (r.kind == "raw-raw") {
      CHECK(r.n_pairs == 2);
    }
  }
}

TEST_CASE("the full pipeline is deterministic across output dirs") {
  ScratchDir dir("det");
  auto cfg = tiny_config(dir);
  cfg.seeds_raw = {1, 2};
  cfg.seeds_pi = {4, 5};
  cfg.train.iterations = 25;
  cfg.stitch.iterations = 5;

  run_all(cfg);
  auto cfg2 = cfg;
  cfg2.out_dir = dir.str("out_b");
  run_all(cfg2);

  for (const std::string name : {"stitch.csv", "cka.csv", "models.csv"})
    CHECK(slurp(cfg.out_dir + "/" + name) ==
          slurp(cfg2.out_dir + "/" + name));
  CHECK(fs::exists(cfg.out_dir + "/stitch_mlp.svg"));
  CHECK(fs::exists(cfg.out_dir + "/cka_mlp.svg"));
  CHECK(slurp(cfg.out_dir + "/stitch_mlp.svg") ==
        slurp(cfg2.out_dir + "/stitch_mlp.svg"));
}

TEST_CASE("cnn family runs the pipeline end to end") {
  ScratchDir dir("cnn");
  auto cfg = tiny_config(dir);
  cfg.family = Family::CNN;
  cfg.channels = {2, 2, 3, 3, 4, 4};
  cfg.seeds_raw = {1, 2};
  cfg.seeds_pi = {4, 5};
  cfg.train_limit = 96;
  cfg.test_limit = 48;
  cfg.train.iterations = 12;
  cfg.stitch.iterations = 4;
  cfg.validate();

  auto data = run_prep(cfg);
  auto models = run_train(cfg, data);
  REQUIRE(models.size() == 4);
  for (const auto& t : models) CHECK(t.ok);

  auto stitch_rows = run_stitch_matrix(cfg, models, data);
  CHECK(stitch_rows.size() == 5 * 5);  // 4 kinds + self, 5 cuts each
  auto cka_rows = run_cka_matrix(cfg, models, data);
  CHECK(cka_rows.size() == 4 * 5);
  for (const auto& r : cka_rows)
    if (r.kind == "self")
      CHECK_THAT(r.mean, Catch::Matchers::WithinAbs(1.0, 1e-12));
}
