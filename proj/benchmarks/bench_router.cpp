#include <benchmark/benchmark.h>

#include "fastlane/router.hpp"
#include "fastlane/scoring.hpp"

using namespace fastlane;

namespace {

ViewMatrix random_views(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t({n, d});
  for (auto& x : t.data()) x = rng.normal();
  return ViewMatrix::from_rows("v", std::move(t));
}

void BM_Route(benchmark::State& state) {
  Rng rng(1);
  const auto views = static_cast<std::size_t>(state.range(0));
  auto p = RouterParams::random(64, 64, rng);
  auto q = random_views(views, 64, rng);
  RouteOptions ro;
  ro.tau = 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(route(q, p, ro, nullptr).selected);
}
BENCHMARK(BM_Route)->Arg(8)->Arg(30);

void BM_RouteTrain(benchmark::State& state) {
  Rng rng(2);
  auto p = RouterParams::random(64, 64, rng);
  auto q = random_views(30, 64, rng);
  RouteOptions ro;
  ro.train = true;
  for (auto _ : state) benchmark::DoNotOptimize(route(q, p, ro, &rng).selected);
}
BENCHMARK(BM_RouteTrain);

void BM_ScoreSumMax(benchmark::State& state) {
  Rng rng(3);
  auto q = random_views(30, 64, rng);
  auto d = random_views(8, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(score_sum_max(q, d).value);
}
BENCHMARK(BM_ScoreSumMax);

void BM_ScoreRouted(benchmark::State& state) {
  Rng rng(4);
  auto q = random_views(30, 64, rng);
  auto d = random_views(8, 64, rng);
  RoutingOutput r;
  r.selected = 3;
  for (auto _ : state) benchmark::DoNotOptimize(score_routed(q, d, r).value);
}
BENCHMARK(BM_ScoreRouted);

}  // namespace
BENCHMARK_MAIN();
