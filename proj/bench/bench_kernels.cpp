#include <benchmark/benchmark.h>

#include "gtal/evaluator.hpp"
#include "gtal/experiment.hpp"
#include "gtal/kernels.hpp"
#include "gtal/model.hpp"

namespace {

using namespace gtal;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 64, H = 128;
  const Matrix x = random_matrix(N, D, 1);
  const auto w = random_vector(3 * D * H, 2);
  const auto b = random_vector(H, 3);
  Matrix pre(N, H);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::temporal_conv_forward(x, w, b, pre);
    else kernels::reference::temporal_conv_forward(x, w, b, pre);
    benchmark::DoNotOptimize(pre.values().data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 64, H = 128;
  const Matrix x = random_matrix(N, D, 1);
  const Matrix d_pre = random_matrix(N, H, 4);
  std::vector<double> dw(3 * D * H), db(H);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::temporal_conv_backward(x, d_pre, dw, db);
    else kernels::reference::temporal_conv_backward(x, d_pre, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

struct Fixture {
  Dataset train;
  ModelParams params;
  ExperimentConfig cfg;

  Fixture() : cfg(preset_config("scale_up")) {
    SynthConfig s = cfg.target;
    s.videos_per_split = 60;
    train = generate_synthetic_dataset(s);
    Rng rng(11);
    params = init_params(s.feature_dim, cfg.train.hidden_dim, s.num_classes, rng);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_BatchGradient(benchmark::State& state) {
  const Fixture& f = fixture();
  std::vector<const VideoRecord*> batch;
  for (const auto& v : f.train.videos) batch.push_back(&v);
  const auto ex = state.range(0) ? Execution::parallel : Execution::serial;
  for (auto _ : state) benchmark::DoNotOptimize(classification_gradients(f.params, batch, f.cfg.train, 5, ex));
}

void BM_LocalizeDataset(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto ex = state.range(0) ? Execution::parallel : Execution::serial;
  for (auto _ : state) benchmark::DoNotOptimize(localize_dataset(f.params, f.train, f.cfg.inference, ex));
}

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/openmp")->Arg(64)->Arg(512);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/openmp")->Arg(64)->Arg(512);
BENCHMARK(BM_BatchGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalizeDataset)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
