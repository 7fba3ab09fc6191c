#include <benchmark/benchmark.h>

#include "moebound/mhc.hpp"
#include "moebound/router.hpp"

using namespace moebound;

namespace {

Vec random_vec(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

void BM_Softmax(benchmark::State& state) {
  Rng rng(1);
  Vec logits = random_vec(static_cast<std::size_t>(state.range(0)), rng, -8.0, 8.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(logits));
  }
}
BENCHMARK(BM_Softmax)->Arg(4)->Arg(8)->Arg(64);

void BM_MlpForward(benchmark::State& state) {
  Rng rng(2);
  MlpParams params = make_mlp({18, 32, 3}, rng);
  Vec x = random_vec(18, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mlp_forward(params, x));
  }
}
BENCHMARK(BM_MlpForward);

void BM_MlpBackward(benchmark::State& state) {
  Rng rng(3);
  MlpParams params = make_mlp({18, 32, 3}, rng);
  Vec x = random_vec(18, rng);
  for (auto _ : state) {
    ForwardCache cache;
    Vec logits = mlp_forward(params, x, &cache);
    SoftmaxXent xent = softmax_cross_entropy(logits, 1);
    benchmark::DoNotOptimize(mlp_backward(params, cache, xent.dlogits));
  }
}
BENCHMARK(BM_MlpBackward);

void BM_SinkhornProject(benchmark::State& state) {
  Rng rng(4);
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Mat m(n, n);
  for (double& v : m.values) v = rng.uniform(0.05, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn_project(m));
  }
}
BENCHMARK(BM_SinkhornProject)->Arg(4)->Arg(8)->Arg(16);

void BM_Route(benchmark::State& state) {
  Rng rng(5);
  RouterModel router;
  router.gate_net = make_mlp({8, 16, 4}, rng);
  std::vector<ExpertStats> stats(4);
  for (ExpertStats& s : stats) {
    s.centroid = random_vec(8, rng);
    s.variance = Vec(8, 1.0);
    s.sample_count = 100;
  }
  Vec embedding = random_vec(8, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(route(router, stats, embedding));
  }
}
BENCHMARK(BM_Route);

}  // namespace

BENCHMARK_MAIN();
