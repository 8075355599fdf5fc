#include <fstream>

#include "doctest.h"
#include "gtal/model.hpp"
#include "gtal/optimizer.hpp"
#include "support.hpp"

using namespace gtal;

namespace {

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

std::pair<std::vector<double>, std::vector<double>> normalized_targets(std::span<const int> y) {
  const double k = static_cast<double>(std::count(y.begin(), y.end(), 1));
  std::vector<double> base(y.size() + 1), supp(y.size() + 1, 0.0);
  for (std::size_t c = 0; c < y.size(); ++c) {
    base[c] = y[c] / (k + 1.0);
    supp[c] = y[c] / k;
  }
  base.back() = 1.0 / (k + 1.0);
  return {base, supp};
}

SynthConfig tiny_synth() {
  SynthConfig s;
  s.num_classes = 3;
  s.feature_dim = 6;
  s.videos_per_split = 12;
  s.duration_median = 4.0;
  s.video_length_min = 16;
  s.video_length_max = 24;
  s.noise_sigma = 0.2;
  s.seed = 3;
  return s;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.hidden_dim = 8;
  t.epochs = 2;
  t.batch_size = 4;
  t.learning_rate = 1e-2;
  t.seed = 17;
  return t;
}

}  // namespace

TEST_CASE("forward output invariants on random inputs") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t N = 1 + trial % 13;
    const ModelParams p = test::random_params(5, 4, 3, rng, 1.5);
    const ForwardOutput out = forward(p, test::random_features(N, 5, rng, 3.0));
    REQUIRE(out.attention.size() == N);
    REQUIRE(out.cas.rows() == N);
    REQUIRE(out.cas.cols() == 4);
    for (std::size_t n = 0; n < N; ++n) {
      CHECK(out.attention[n] >= 0.0);
      CHECK(out.attention[n] <= 1.0);
      double s = 0.0;
      for (double x : out.cas.row(n)) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero parameters give neutral attention and uniform CAS") {
  Rng rng(2);
  const ModelParams p = ModelParams::zeros(4, 3, 8);
  const ForwardOutput out = forward(p, test::random_features(7, 4, rng));
  for (double a : out.attention) CHECK(a == 0.5);
  for (double x : out.cas.values()) CHECK(x == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(forward(p, test::random_features(1, 4, rng)).attention.size() == 1);
}

TEST_CASE("forward is deterministic without dropout and masks scale") {
  Rng rng(3);
  const ModelParams p = test::random_params(4, 6, 2, rng);
  const FeatureSequence f = test::random_features(9, 4, rng);
  CHECK(forward(p, f).cas == forward(p, f).cas);
  Rng a(5), b(5);
  CHECK(forward(p, f, 0.3, &a).cas == forward(p, f, 0.3, &b).cas);
  Rng m(7);
  const DropoutMask mask = make_dropout_mask(9, 6, 0.25, m);
  for (double s : mask.scale.values()) CHECK((s == 0.0 || s == doctest::Approx(1.0 / 0.75)));
}

TEST_CASE("top-k examples") {
  CHECK(topk_count(4, 8) == 1);
  CHECK(topk_count(8, 4) == 2);
  CHECK(topk_count(17, 8) == 3);
  CHECK(topk_count(1, 1) == 1);
  CHECK_THROWS_AS(topk_count(4, 0), ConfigError);

  Matrix s(4, 2);
  const double col0[] = {0.1, 0.7, 0.3, 0.2}, col1[] = {0.5, 0.4, 0.9, 0.0};
  for (std::size_t n = 0; n < 4; ++n) s(n, 0) = col0[n], s(n, 1) = col1[n];
  const auto agg = aggregate_topk(s, 8);
  const double z = std::exp(0.7) + std::exp(0.9);
  CHECK(agg[0] == doctest::Approx(std::exp(0.7) / z));
  CHECK(agg[1] == doctest::Approx(std::exp(0.9) / z));

  Matrix t(8, 1, 0.0);
  const double col[] = {0.9, 0.8, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0};
  for (std::size_t n = 0; n < 8; ++n) t(n, 0) = col[n];
  CHECK(topk_mean(t, 4)[0] == doctest::Approx(0.85));

  const auto uniform = aggregate_topk(Matrix(5, 3, 0.4), 8);
  for (double u : uniform) CHECK(u == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("top-k mean is permutation invariant and monotone") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 1 + trial % 20;
    Matrix s(N, 3);
    for (double& x : s.values()) x = u(rng);
    const auto base = topk_mean(s, 8);

    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix p(N, 3);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < 3; ++c) p(n, c) = s(perm[n], c);
    const auto permuted = topk_mean(p, 8);
    for (std::size_t c = 0; c < 3; ++c) CHECK(permuted[c] == doctest::Approx(base[c]).epsilon(1e-14));

    Matrix bumped = s;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    bumped(n, 1) += u(rng);
    CHECK(topk_mean(bumped, 8)[1] >= base[1]);
  }
}

TEST_CASE("classification loss of uniform predictions is 2 ln 9") {
  Rng rng(5);
  const ForwardOutput out = forward(ModelParams::zeros(3, 2, 8), test::random_features(10, 3, rng));
  const std::vector<int> y = {0, 0, 1, 0, 0, 0, 0, 0};
  CHECK(classification_loss(out, y, 8) == doctest::Approx(2.0 * std::log(9.0)).epsilon(1e-12));
  CHECK(classification_loss(out, y, 8) == doctest::Approx(4.394449).epsilon(1e-6));
  const std::vector<int> none(8, 0);
  CHECK_THROWS_AS(classification_loss(out, none, 8), Error);
}

TEST_CASE("classification loss is bounded below by the target entropies") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + trial % 5;
    const ModelParams p = test::random_params(4, 5, C, rng, 2.0);
    const auto y = test::random_label(C, rng);
    const ForwardOutput out = forward(p, test::random_features(3 + trial % 9, 4, rng));
    const auto [tb, ts] = normalized_targets(y);
    const double l = classification_loss(out, y, 8);
    CHECK(std::isfinite(l));
    CHECK(l >= entropy(tb) + entropy(ts) - 1e-12);
  }
}

TEST_CASE("classification loss stays finite when probabilities underflow") {
  ModelParams p = ModelParams::zeros(1, 1, 2);
  p.embed_w[1] = 1.0;
  p.cls_w[0] = 2000.0;
  FeatureSequence f{Matrix(4, 1, 1.0), 1.0};
  const ForwardOutput out = forward(p, f);
  const std::vector<int> y = {0, 1};
  CHECK(std::isfinite(classification_loss(out, y, 8)));
}

TEST_CASE("analytic L_cls gradient matches central differences") {
  Rng rng(7);
  TrainConfig cfg;
  cfg.dropout = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t N = 2 + static_cast<std::size_t>(inst) % 15;
    const int D = 2 + inst % 7, H = 2 + (inst * 3) % 7, C = 2 + inst % 4;
    const ModelParams p = test::random_params(D, H, C, rng);
    VideoRecord v = test::random_video(N, static_cast<std::size_t>(D), C, rng);
    const VideoRecord* batch[] = {&v};
    const BatchGradient g = classification_gradients(p, batch, cfg, 0, Execution::serial);
    auto loss = [&](const ModelParams& q) { return classification_loss(forward(q, v.features), v.label, cfg.topk_ratio); };
    CHECK(g.mean_loss == doctest::Approx(loss(p)).epsilon(1e-14));
    for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t)
      for (std::size_t i = 0; i < p.tensor(t).size(); ++i) {
        const double fd = test::central_difference(p, t, i, 1e-4, loss);
        INFO("tensor ", ModelParams::tensor_names()[t], " index ", i);
        CHECK(test::relative_error(g.grad.tensor(t)[i], fd) <= 1e-4);
      }
  }
}

TEST_CASE("batch gradient is the mean of per-video gradients") {
  Rng rng(8);
  TrainConfig cfg;
  cfg.dropout = 0.0;
  const ModelParams p = test::random_params(3, 4, 2, rng);
  VideoRecord a = test::random_video(6, 3, 2, rng, "a"), b = test::random_video(9, 3, 2, rng, "b");
  const VideoRecord* both[] = {&a, &b};
  const VideoRecord* only_a[] = {&a};
  const VideoRecord* only_b[] = {&b};
  const auto g = classification_gradients(p, both, cfg, 0);
  const auto ga = classification_gradients(p, only_a, cfg, 0), gb = classification_gradients(p, only_b, cfg, 0);
  CHECK(g.mean_loss == doctest::Approx(0.5 * (ga.mean_loss + gb.mean_loss)));
  for (std::size_t i = 0; i < g.grad.embed_w.size(); ++i)
    CHECK(g.grad.embed_w[i] == doctest::Approx(0.5 * (ga.grad.embed_w[i] + gb.grad.embed_w[i])));
}

TEST_CASE("non-finite parameters are reported by name") {
  ModelParams p = ModelParams::zeros(2, 2, 2);
  p.attn_b[0] = std::numeric_limits<double>::infinity();
  try {
    p.check_finite("ctx");
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("attn_b") != std::string::npos);
  }
}

TEST_CASE("training is deterministic and reduces the loss") {
  SynthConfig s = tiny_synth();
  const Dataset ds = generate_synthetic_dataset(s);
  TrainConfig t = tiny_train();
  const TrainResult a = train_base(ds, t), b = train_base(ds, t);
  CHECK(a.params == b.params);
  REQUIRE(a.log.size() == 2);

  TrainConfig zero = t;
  zero.epochs = 0;
  const TrainResult init = train_base(ds, zero);
  CHECK(init.log.empty());
  Rng init_rng(substream_seed(t.seed, "init"));
  CHECK(init.params == init_params(s.feature_dim, t.hidden_dim, s.num_classes, init_rng));

  TrainConfig one = t;
  one.epochs = 1;
  CHECK(mean_classification_loss(train_base(ds, one).params, ds, t.topk_ratio) <
        mean_classification_loss(init.params, ds, t.topk_ratio));

  Dataset test_split = ds;
  test_split.split = Split::test;
  CHECK_THROWS_AS(train_base(test_split, t), ConfigError);
  t.learning_rate = 0.0;
  CHECK_THROWS_AS(train_base(ds, t), ConfigError);
}

TEST_CASE("Adam first step moves each weight by the learning rate") {
  Rng rng(9);
  ModelParams p = test::random_params(2, 2, 1, rng);
  const ModelParams before = p;
  ParamGradients g = test::random_params(2, 2, 1, rng);
  Adam opt(p, {.learning_rate = 0.01});
  opt.step(p, g);
  CHECK(opt.steps() == 1);
  for (std::size_t i = 0; i < p.embed_w.size(); ++i) {
    const double sign = g.embed_w[i] > 0 ? 1.0 : -1.0;
    CHECK(before.embed_w[i] - p.embed_w[i] == doctest::Approx(0.01 * sign).epsilon(1e-5));
  }
}

TEST_CASE("checkpoint round-trip is exact and corruption is detected") {
  test::TempDir dir("ckpt");
  Rng rng(10);
  const ModelParams p = test::random_params(5, 3, 4, rng);
  const auto file = dir.path / "sub" / "m.ckpt";
  save_checkpoint(p, file);
  CHECK(load_checkpoint(file) == p);

  const auto size = std::filesystem::file_size(file);
  std::filesystem::resize_file(file, size - 3);
  CHECK_THROWS_AS(load_checkpoint(file), Error);
  save_checkpoint(p, file);
  std::ofstream(file, std::ios::app) << "x";
  CHECK_THROWS_AS(load_checkpoint(file), Error);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "none.ckpt"), Error);
}
