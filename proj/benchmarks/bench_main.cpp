#include <benchmark/benchmark.h>

#include "edgeseg/graph.hpp"
#include "edgeseg/kernels.hpp"
#include "edgeseg/rng.hpp"

using namespace edgeseg;

namespace {

Tensor<float> random_input(Shape4 s, std::uint64_t seed) {
  Tensor<float> t(s);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

ConvParams<float> conv_params(int co, int ci, int k, int stride, int pad,
                              std::uint64_t seed) {
  ConvParams<float> p;
  p.weights = random_input(Shape4{co, ci, k, k}, seed);
  p.stride_h = p.stride_w = stride;
  p.pad_h = p.pad_w = pad;
  return p;
}

NetworkConfig bench_config() {
  NetworkConfig c;
  c.num_classes = 32;
  c.seed = 1;
  c.nodes = {
      {"stem", StemSpec{32}},
      {"rb1", ResidualBottleneckSpec{32, 4}},
      {"rb2", ResidualBottleneckSpec{32, 4}},
      {"br", BottleneckReductionSpec{32, 16, 728}},
      {"rb3", ResidualBottleneckSpec{728, 4}},
      {"rb4", ResidualBottleneckSpec{728, 4}},
      {"rb5", ResidualBottleneckSpec{728, 4}},
      {"rb6", ResidualBottleneckSpec{728, 4}},
      {"rb7", ResidualBottleneckSpec{728, 4}},
      {"rb8", ResidualBottleneckSpec{728, 4}},
      {"refine", RefineSpec{728, 32, 32, 8}},
      {"head", HeadSpec{32, 32, 2}},
  };
  c.edges = {{"input", "stem", "in"}, {"stem", "rb1", "in"},
             {"rb1", "rb2", "in"},    {"rb2", "br", "in"},
             {"br", "rb3", "in"},     {"rb3", "rb4", "in"},
             {"rb4", "rb5", "in"},    {"rb5", "rb6", "in"},
             {"rb6", "rb7", "in"},    {"rb7", "rb8", "in"},
             {"rb8", "refine", "deep"}, {"refine", "head", "in"}};
  c.shortcut_mask = {{"rb2", "refine"}};
  return c;
}

void BM_Conv1x1(benchmark::State& state) {
  auto x = random_input(Shape4{1, 64, 88, 120}, 1);
  auto p = conv_params(64, 64, 1, 1, 0, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv1x1);

void BM_Conv3x3(benchmark::State& state) {
  auto x = random_input(Shape4{1, 32, 88, 120}, 3);
  auto p = conv_params(32, 32, 3, 1, 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv3x3);

void BM_Conv8x8Stride8(benchmark::State& state) {
  auto x = random_input(Shape4{1, 16, 176, 240}, 5);
  auto p = conv_params(728, 16, 8, 8, 0, 6);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv8x8Stride8);

void BM_BilinearUpsample8x(benchmark::State& state) {
  auto x = random_input(Shape4{1, 64, 22, 30}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_upsample(x, 8));
}
BENCHMARK(BM_BilinearUpsample8x);

void BM_ReferenceForward(benchmark::State& state) {
  auto graph = assemble_network<float>(bench_config());
  auto x = random_input(Shape4{1, 3, 352, 480}, 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(graph.forward(x, Mode::Inference));
}
BENCHMARK(BM_ReferenceForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
