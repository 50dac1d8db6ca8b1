#include <limits>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "tmlkit/stitch.hpp"

using namespace tml;

namespace {

ModelSpec mlp_spec() {
  ModelSpec s;
  s.family = Family::MLP;
  s.in_channels = 1;
  s.input_hw = 4;
  s.hidden = 12;
  return s;
}

ModelSpec cnn_spec(int in_ch = 1) {
  ModelSpec s;
  s.family = Family::CNN;
  s.in_channels = in_ch;
  s.input_hw = 16;
  s.channels = {2, 2, 3, 3, 4, 4};
  return s;
}

DatasetSplit random_split(int n, int c, int hw, uint64_t seed) {
  DatasetSplit s;
  s.channels = c;
  s.height = s.width = hw;
  s.kind = "raw";
  Rng rng(seed);
  for (int i = 0; i < n * c * hw * hw; ++i)
    s.images.push_back(static_cast<float>(rng.uniform()));
  for (int i = 0; i < n; ++i) s.labels.push_back(i % 3);
  return s;
}

std::vector<std::vector<float>> snapshot_params(Model& m) {
  std::vector<std::vector<float>> out;
  for (auto& l : m.layers)
    for (auto* b : l.state_blobs()) out.push_back(*b);
  return out;
}

}  // namespace

TEST_CASE("adapter kinds: affine with bias for flat cuts, 1x1 conv without") {
  auto m1 = build_model(mlp_spec(), 1);
  auto m2 = build_model(mlp_spec(), 2);
  auto st = make_stitched(m1, m2, 2);
  REQUIRE(st.adapter.cfg.kind == LayerKind::Linear);
  REQUIRE(st.adapter.cfg.bias);
  REQUIRE(st.adapter.weight.shape() == Shape({12, 12}));
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      REQUIRE(st.adapter.weight.data()[i * 12 + j] == (i == j ? 1.0f : 0.0f));
  for (float b : st.adapter.bias.data()) REQUIRE(b == 0.0f);

  auto c1 = build_model(cnn_spec(), 1);
  auto c2 = build_model(cnn_spec(), 2);
  auto stc = make_stitched(c1, c2, 3);
  REQUIRE(stc.adapter.cfg.kind == LayerKind::Conv2d);
  REQUIRE(stc.adapter.cfg.kernel == 1);
  REQUIRE_FALSE(stc.adapter.cfg.bias);
  REQUIRE(stc.adapter.weight.dim(0) == 3);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      REQUIRE(stc.adapter.weight.data()[o * 3 + i] == (o == i ? 1.0f : 0.0f));
}

TEST_CASE("stitching rejects incompatible models") {
  auto mlp = build_model(mlp_spec(), 1);
  auto cnn = build_model(cnn_spec(), 1);
  REQUIRE_THROWS_WITH(make_stitched(mlp, cnn, 1),
                      Catch::Matchers::ContainsSubstring("matching families"));
  auto wide = mlp_spec();
  wide.hidden = 24;
  auto mlp_wide = build_model(wide, 1);
  REQUIRE_THROWS_WITH(make_stitched(mlp, mlp_wide, 1),
                      Catch::Matchers::ContainsSubstring("cut structure"));
  auto mlp2 = build_model(mlp_spec(), 2);
  REQUIRE_THROWS_AS(make_stitched(mlp, mlp2, 0), std::out_of_range);
  REQUIRE_THROWS_AS(make_stitched(mlp, mlp2, 5), std::out_of_range);
}

TEST_CASE("different input channel counts stitch fine past the first layer") {
  auto a = build_model(cnn_spec(2), 1);
  auto b = build_model(cnn_spec(3), 2);
  REQUIRE_NOTHROW(make_stitched(a, b, 1));
}

TEST_CASE("self-stitch at identity init reproduces logits bit-for-bit") {
  auto data = random_split(64, 1, 16, 5);
  for (auto spec : {mlp_spec(), cnn_spec()}) {
    ModelSpec s = spec;
    s.input_hw = 16;
    s.in_channels = 1;
    auto m = build_model(s, 9);
    TrainHyper h;
    h.iterations = 3;
    h.batch = 32;
    train_model(m, data, data, h);

    std::vector<int64_t> idx;
    for (int64_t i = 0; i < data.size(); ++i) idx.push_back(i);
    auto x = batch_tensor(data, idx);
    NoGradGuard ng;
    auto want = forward(m, x, Mode::Eval);
    for (int k = 1; k <= m.num_cuts(); ++k) {
      auto st = make_stitched(m, m, k);
      auto got = stitched_forward(st, x);
      REQUIRE(got.data() == want.data());
    }
    for (int k = 1; k <= m.num_cuts(); ++k) {
      auto st = make_stitched(m, m, k);
      REQUIRE(stitched_evaluate(st, data) == evaluate(m, data));
    }
  }
}

TEST_CASE("stitch training moves only the adapter") {
  auto data = random_split(64, 1, 4, 6);
  auto f1 = build_model(mlp_spec(), 11);
  auto f2 = build_model(mlp_spec(), 12);
  TrainHyper th;
  th.iterations = 4;
  train_model(f1, data, data, th);
  train_model(f2, data, data, th);

  auto before1 = snapshot_params(f1);
  auto before2 = snapshot_params(f2);
  auto st = make_stitched(f1, f2, 2);
  auto w0 = st.adapter.weight.data();
  TrainHyper sh;
  sh.lr = 1e-2;
  sh.batch = 32;
  sh.iterations = 8;
  double acc = train_stitch(st, data, data, sh, 3);
  REQUIRE(acc >= 0.0);
  REQUIRE(acc <= 1.0);
  REQUIRE(snapshot_params(f1) == before1);
  REQUIRE(snapshot_params(f2) == before2);
  REQUIRE(st.adapter.weight.data() != w0);
}

TEST_CASE("stitch training is deterministic in the seed") {
  auto data = random_split(64, 1, 4, 6);
  auto f1 = build_model(mlp_spec(), 21);
  auto f2 = build_model(mlp_spec(), 22);
  TrainHyper th;
  th.iterations = 3;
  train_model(f1, data, data, th);
  train_model(f2, data, data, th);
  TrainHyper sh;
  sh.iterations = 6;
  auto sta = make_stitched(f1, f2, 1);
  auto stb = make_stitched(f1, f2, 1);
  double a = train_stitch(sta, data, data, sh, 7);
  double b = train_stitch(stb, data, data, sh, 7);
  REQUIRE(a == b);
  REQUIRE(sta.adapter.weight.data() == stb.adapter.weight.data());
}

TEST_CASE("trained self-stitch stays within a point of the baseline") {
  auto train = random_split(96, 1, 4, 31);
  auto test = random_split(48, 1, 4, 32);
  auto m = build_model(mlp_spec(), 33);
  TrainHyper th;
  th.iterations = 60;
  train_model(m, train, test, th);
  auto st = make_stitched(m, m, 2);
  TrainHyper sh;
  sh.lr = 1e-4;
  sh.iterations = 40;
  double acc = train_stitch(st, train, test, sh, 5);
  REQUIRE(acc >= m.test_accuracy - 0.01 - 1e-12);
}

TEST_CASE("stitching at the last cut retrains a probe over the final linear") {
  auto m = build_model(mlp_spec(), 41);
  int last_cut = m.num_cuts();
  REQUIRE(m.cut_after[last_cut - 1] + 2 ==
          static_cast<int>(m.layers.size()));
  REQUIRE(m.layers.back().cfg.kind == LayerKind::Linear);
}

TEST_CASE("stitch training aborts on a non-finite loss") {
  auto f1 = build_model(mlp_spec(), 51);
  auto f2 = build_model(mlp_spec(), 52);
  f2.layers.back().bias.data()[0] = std::numeric_limits<float>::quiet_NaN();
  auto data = random_split(64, 1, 4, 53);
  auto st = make_stitched(f1, f2, 1);
  TrainHyper sh;
  sh.iterations = 10;
  REQUIRE_THROWS_WITH(train_stitch(st, data, data, sh, 1),
                      Catch::Matchers::ContainsSubstring("diverged"));
}
