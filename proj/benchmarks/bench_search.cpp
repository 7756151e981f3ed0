#include <benchmark/benchmark.h>

#include <memory>

#include "fastlane/index.hpp"
#include "fastlane/synth.hpp"

using namespace fastlane;

namespace {

struct Corpus {
  SynthCorpus synth;
  std::unique_ptr<FlatIndex> flat;
  std::unique_ptr<IvfIndex> ivf;
  std::vector<ViewMatrix> queries;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus x;
    SynthConfig sc;
    sc.n_docs = 10000;
    x.synth = synth_corpus(sc);
    std::vector<ViewMatrix> docs;
    for (const auto& d : x.synth.corpus.records()) docs.push_back(x.synth.ideal_views(d.text, d.id));
    const auto views = views_from_matrices(docs);
    x.flat = std::make_unique<FlatIndex>(FlatIndex::build(views));
    KMeansOptions ko;
    ko.k = 64;
    x.ivf = std::make_unique<IvfIndex>(IvfIndex::build(views, ko));
    Rng rng(1);
    for (int i = 0; i < 32; ++i) x.queries.push_back(x.synth.wide_query(rng.index(10000), 30, rng, "q"));
    return x;
  }();
  return c;
}

const MultiViewIndex& pick(int kind) {
  return kind == 0 ? static_cast<const MultiViewIndex&>(*corpus().flat) : *corpus().ivf;
}

void BM_SumMax(benchmark::State& state) {
  const auto& idx = pick(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    auto r = idx.search_sum_max(corpus().queries[i++ % 32], 10, 8);
    benchmark::DoNotOptimize(r.hits.data());
  }
}
BENCHMARK(BM_SumMax)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SingleView(benchmark::State& state) {
  const auto& idx = pick(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = corpus().queries[i++ % 32];
    auto r = idx.search(q.view(1), 10, 8);
    benchmark::DoNotOptimize(r.hits.data());
  }
}
BENCHMARK(BM_SingleView)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  Rng rng(3);
  const std::size_t n = 20000, d = 64;
  std::vector<float> data(n * d);
  for (auto& x : data) x = static_cast<float>(rng.normal());
  KMeansOptions ko;
  ko.k = static_cast<std::size_t>(state.range(0));
  ko.max_iterations = 10;
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(data, n, d, ko).iterations);
}
BENCHMARK(BM_KMeans)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
