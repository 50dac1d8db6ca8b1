#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "tmlkit/model.hpp"

using namespace tml;

namespace {

ModelSpec tiny_mlp_spec(int in_ch = 1, int hw = 4, int hidden = 16) {
  ModelSpec s;
  s.family = Family::MLP;
  s.in_channels = in_ch;
  s.input_hw = hw;
  s.hidden = hidden;
  return s;
}

ModelSpec tiny_cnn_spec(int in_ch = 1, int hw = 16) {
  ModelSpec s;
  s.family = Family::CNN;
  s.in_channels = in_ch;
  s.input_hw = hw;
  s.channels = {2, 2, 3, 3, 4, 4};
  return s;
}

DatasetSplit random_split(int n, int c, int hw, int classes, uint64_t seed) {
  DatasetSplit s;
  s.channels = c;
  s.height = s.width = hw;
  s.kind = "raw";
  Rng rng(seed);
  for (int i = 0; i < n * c * hw * hw; ++i)
    s.images.push_back(static_cast<float>(rng.uniform()));
  for (int i = 0; i < n; ++i) s.labels.push_back(i % classes);
  return s;
}

// Two linearly separable point clouds around (+1,+1) and (-1,-1).
DatasetSplit separable_split(int n, uint64_t seed) {
  DatasetSplit s;
  s.channels = 2;
  s.height = s.width = 1;
  s.kind = "raw";
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    int label = i % 2;
    float off = label ? 1.0f : -1.0f;
    s.images.push_back(off + 0.3f * static_cast<float>(rng.normal()));
    s.images.push_back(off + 0.3f * static_cast<float>(rng.normal()));
    s.labels.push_back(label);
  }
  return s;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("mlp structure: flatten, 5 linears, relu between, 4 cuts") {
  auto m = build_model(tiny_mlp_spec(3, 4, 8), 7);
  std::vector<LayerKind> kinds;
  for (auto& l : m.layers) kinds.push_back(l.cfg.kind);
  std::vector<LayerKind> want = {
      LayerKind::Flatten, LayerKind::Linear, LayerKind::ReLU,
      LayerKind::Linear,  LayerKind::ReLU,   LayerKind::Linear,
      LayerKind::ReLU,    LayerKind::Linear, LayerKind::ReLU,
      LayerKind::Linear};
  REQUIRE(kinds == want);
  REQUIRE(m.cut_after == std::vector<int>({2, 4, 6, 8}));
  int64_t in = 3 * 4 * 4;
  int64_t want_params = (in * 8 + 8) + 3 * (8 * 8 + 8) + (8 * 3 + 3);
  int64_t got = 0;
  for (auto& l : m.layers) got += l.param_count();
  REQUIRE(got == want_params);
}

TEST_CASE("cnn structure: 6 conv blocks, 4 pools, head, 5 cuts") {
  auto m = build_model(tiny_cnn_spec(), 7);
  int convs = 0, bns = 0, pools = 0, linears = 0;
  for (auto& l : m.layers) {
    if (l.cfg.kind == LayerKind::Conv2d) ++convs;
    if (l.cfg.kind == LayerKind::BatchNorm2d) ++bns;
    if (l.cfg.kind == LayerKind::MaxPool2d) ++pools;
    if (l.cfg.kind == LayerKind::Linear) ++linears;
  }
  REQUIRE(convs == 6);
  REQUIRE(bns == 6);
  REQUIRE(pools == 4);
  REQUIRE(linears == 1);
  REQUIRE(m.cut_after == std::vector<int>({2, 6, 10, 14, 18}));
  REQUIRE(m.layers[m.layers.size() - 3].cfg.kind == LayerKind::AvgPool2d);
  REQUIRE(m.layers.back().cfg.kind == LayerKind::Linear);

  Rng xr(3);
  auto x = tmltest::random_tensor<float>({5, 1, 16, 16}, xr);
  auto y = forward(m, x, Mode::Eval);
  REQUIRE(y.shape() == Shape({5, 3}));
}

TEST_CASE("initialization is deterministic in the seed") {
  auto a = build_model(tiny_mlp_spec(), 11);
  auto b = build_model(tiny_mlp_spec(), 11);
  auto c = build_model(tiny_mlp_spec(), 12);
  REQUIRE(a.layers[1].weight.data() == b.layers[1].weight.data());
  REQUIRE(a.layers[1].weight.data() != c.layers[1].weight.data());
}

TEST_CASE("spec validation rejects bad dimensions") {
  ModelSpec s = tiny_cnn_spec();
  s.input_hw = 20;  // not divisible by 16
  REQUIRE_THROWS_AS(build_model(s, 1), std::invalid_argument);
  s = tiny_cnn_spec();
  s.channels = {2, 2};
  REQUIRE_THROWS_AS(build_model(s, 1), std::invalid_argument);
  s = tiny_mlp_spec();
  s.hidden = 0;
  REQUIRE_THROWS_AS(build_model(s, 1), std::invalid_argument);
}

TEST_CASE("split consistency: cut-and-continue equals full forward exactly") {
  for (auto spec : {tiny_mlp_spec(2, 4, 8), tiny_cnn_spec(2, 16)}) {
    auto m = build_model(spec, 21);
    Rng xr(9);
    auto x = tmltest::random_tensor<float>({6, 2, spec.input_hw, spec.input_hw},
                                           xr);
    NoGradGuard ng;
    auto full = forward(m, x, Mode::Eval);
    for (int k = 1; k <= m.num_cuts(); ++k) {
      auto head = forward_range(m, x, 0, m.cut_after[k - 1], Mode::Eval);
      auto tail = forward_range(m, head, m.cut_after[k - 1] + 1,
                                static_cast<int>(m.layers.size()) - 1,
                                Mode::Eval);
      REQUIRE(tail.data() == full.data());

      auto flat = forward_to_layer(m, k, x);
      REQUIRE(flat.shape().size() == 2);
      REQUIRE(flat.dim(0) == 6);
      REQUIRE(flat.data() == head.data());
    }
  }
}

TEST_CASE("forward_to_layer rejects out-of-range cuts") {
  auto m = build_model(tiny_mlp_spec(), 1);
  Rng xr(1);
  auto x = tmltest::random_tensor<float>({2, 1, 4, 4}, xr);
  REQUIRE_THROWS_AS(forward_to_layer(m, 0, x), std::out_of_range);
  REQUIRE_THROWS_AS(forward_to_layer(m, 5, x), std::out_of_range);
  REQUIRE_NOTHROW(forward_to_layer(m, 4, x));
}

TEST_CASE("training for zero iterations leaves parameters identical") {
  auto m = build_model(tiny_mlp_spec(), 31);
  auto fresh = build_model(tiny_mlp_spec(), 31);
  auto data = random_split(64, 1, 4, 3, 5);
  TrainHyper h;
  h.iterations = 0;
  train_model(m, data, data, h);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    auto got = m.layers[i].state_blobs();
    auto want = fresh.layers[i].state_blobs();
    REQUIRE(got.size() == want.size());
    for (size_t j = 0; j < got.size(); ++j) REQUIRE(*got[j] == *want[j]);
  }
  REQUIRE(m.train_accuracy == evaluate(m, data));
}

TEST_CASE("training solves a linearly separable toy problem") {
  auto spec = tiny_mlp_spec(2, 1, 16);
  auto m = build_model(spec, 41);
  auto data = separable_split(64, 17);
  TrainHyper h;
  h.lr = 5e-3;
  h.batch = 32;
  h.iterations = 200;
  train_model(m, data, data, h);
  REQUIRE(m.train_accuracy == 1.0);
}

TEST_CASE("untrained models sit near the class-frequency baseline") {
  auto data = random_split(300, 1, 4, 3, 77);  // balanced thirds
  double acc_sum = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto m = build_model(tiny_mlp_spec(), 100 + seed);
    acc_sum += evaluate(m, data);
  }
  double mean = acc_sum / 10.0;
  REQUIRE(mean > 1.0 / 3.0 - 0.1);
  REQUIRE(mean < 1.0 / 3.0 + 0.1);
}

TEST_CASE("training is deterministic in the seed") {
  auto data = random_split(64, 1, 4, 3, 5);
  TrainHyper h;
  h.iterations = 10;
  auto a = build_model(tiny_mlp_spec(), 51);
  auto b = build_model(tiny_mlp_spec(), 51);
  train_model(a, data, data, h);
  train_model(b, data, data, h);
  for (size_t i = 0; i < a.layers.size(); ++i) {
    auto ga = a.layers[i].state_blobs(), gb = b.layers[i].state_blobs();
    for (size_t j = 0; j < ga.size(); ++j) REQUIRE(*ga[j] == *gb[j]);
  }
  REQUIRE(a.test_accuracy == b.test_accuracy);
}

TEST_CASE("training aborts on a non-finite loss instead of continuing") {
  auto m = build_model(tiny_mlp_spec(2, 1, 16), 61);
  // A non-finite bias on the logits layer makes the very first loss NaN.
  m.layers.back().bias.data()[0] = std::numeric_limits<float>::quiet_NaN();
  auto data = random_split(64, 2, 1, 3, 62);
  TrainHyper h;
  h.iterations = 10;
  REQUIRE_THROWS_WITH(train_model(m, data, data, h),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("evaluate rejects an empty dataset") {
  auto m = build_model(tiny_mlp_spec(), 1);
  DatasetSplit empty;
  empty.channels = 1;
  empty.height = empty.width = 4;
  REQUIRE_THROWS_AS(evaluate(m, empty), std::invalid_argument);
}

TEST_CASE("batch stream shuffles per epoch, deterministically") {
  BatchStream a(10, 4, 99), b(10, 4, 99);
  std::vector<int64_t> seen;
  for (int i = 0; i < 6; ++i) {
    auto ba = a.next(), bb = b.next();
    REQUIRE(ba == bb);
    REQUIRE(ba.size() == 4);
    seen.insert(seen.end(), ba.begin(), ba.end());
  }
  std::sort(seen.begin(), seen.end());
  REQUIRE(seen.front() >= 0);
  REQUIRE(seen.back() <= 9);
  REQUIRE_THROWS_AS(BatchStream(3, 4, 1), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is byte-identical and preserves evaluate") {
  auto dir = std::filesystem::temp_directory_path() / "tmlkit_ckpt_test";
  std::filesystem::create_directories(dir);
  auto data = random_split(64, 2, 16, 3, 5);
  for (auto spec : {tiny_mlp_spec(2, 16, 8), tiny_cnn_spec(2, 16)}) {
    auto m = build_model(spec, 71, "raw");
    TrainHyper h;
    h.iterations = 5;
    train_model(m, data, data, h);

    auto p1 = (dir / "a.ckpt").string();
    auto p2 = (dir / "b.ckpt").string();
    save_checkpoint(m, p1);
    auto loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    REQUIRE(read_bytes(p1) == read_bytes(p2));

    REQUIRE(loaded.seed == m.seed);
    REQUIRE(loaded.input_kind == m.input_kind);
    REQUIRE(loaded.train_accuracy == m.train_accuracy);
    REQUIRE(evaluate(loaded, data) == evaluate(m, data));
    REQUIRE(evaluate(loaded, data) == m.train_accuracy);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  auto dir = std::filesystem::temp_directory_path() / "tmlkit_ckpt_bad";
  std::filesystem::create_directories(dir);
  auto m = build_model(tiny_mlp_spec(), 81);
  auto good = (dir / "good.ckpt").string();
  save_checkpoint(m, good);
  auto bytes = read_bytes(good);

  auto write_variant = [&](const std::string& name, std::string b) {
    auto p = (dir / name).string();
    std::ofstream f(p, std::ios::binary);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
    return p;
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  REQUIRE_THROWS_WITH(load_checkpoint(write_variant("magic", bad_magic)),
                      Catch::Matchers::ContainsSubstring("not a model"));
  auto bad_version = bytes;
  bad_version[4] = 9;
  REQUIRE_THROWS_WITH(load_checkpoint(write_variant("ver", bad_version)),
                      Catch::Matchers::ContainsSubstring("version"));
  auto truncated = bytes.substr(0, bytes.size() - 7);
  REQUIRE_THROWS_WITH(load_checkpoint(write_variant("trunc", truncated)),
                      Catch::Matchers::ContainsSubstring("truncated"));
  auto padded = bytes + "zz";
  REQUIRE_THROWS_WITH(load_checkpoint(write_variant("pad", padded)),
                      Catch::Matchers::ContainsSubstring("trailing"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("descriptor rejects unknown families") {
  REQUIRE_THROWS_WITH(
      model_from_descriptor("family=resnet in=3 hw=32 classes=3 kind=raw"),
      Catch::Matchers::ContainsSubstring("unsupported family"));
  REQUIRE_THROWS_WITH(model_from_descriptor("in=3 hw=32"),
                      Catch::Matchers::ContainsSubstring("missing key"));
}
