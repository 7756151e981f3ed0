#include "fastlane/bench.hpp"

#include <algorithm>
#include <chrono>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {

// Reference timings at 100k documents, sum-max vs routed.
constexpr double kReferenceSumMaxSeconds = 112.04;
constexpr double kReferenceRoutedSeconds = 14.48;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const BenchPath& BenchReport::path(ScorerKind k) const {
  for (const auto& p : paths)
    if (p.scorer == k) return p;
  throw ConfigError("bench report has no " + to_string(k) + " path");
}

double BenchReport::wallclock_speedup() const {
  return path(ScorerKind::sum_max).median_seconds_per_query / path(ScorerKind::routed).median_seconds_per_query;
}

double BenchReport::scan_ratio() const {
  return static_cast<double>(path(ScorerKind::sum_max).vectors_scanned) /
         static_cast<double>(path(ScorerKind::routed).vectors_scanned);
}

double BenchReport::probe_ratio() const {
  return static_cast<double>(path(ScorerKind::sum_max).probes) / static_cast<double>(path(ScorerKind::routed).probes);
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json j{{"index", index_kind}, {"queries", queries}, {"reps", reps}, {"top_k", top_k}, {"nprobe", nprobe}};
  auto& ps = j["paths"] = nlohmann::json::array();
  for (const auto& p : paths) {
    ps.push_back({{"scorer", to_string(p.scorer)},
                  {"median_seconds_per_query", p.median_seconds_per_query},
                  {"rep_seconds", p.rep_seconds},
                  {"vectors_scanned", p.vectors_scanned},
                  {"probes", p.probes}});
  }
  const bool both = std::any_of(paths.begin(), paths.end(), [](const auto& p) { return p.scorer == ScorerKind::sum_max; }) &&
                    std::any_of(paths.begin(), paths.end(), [](const auto& p) { return p.scorer == ScorerKind::routed; });
  if (both) {
    j["sum_max_over_routed"] = {
        {"wallclock", wallclock_speedup()}, {"vectors_scanned", scan_ratio()}, {"probes", probe_ratio()}};
  }
  j["reference"] = {{"corpus_docs", 100000},
                    {"sum_max_seconds", kReferenceSumMaxSeconds},
                    {"routed_seconds", kReferenceRoutedSeconds},
                    {"speedup", kReferenceSumMaxSeconds / kReferenceRoutedSeconds}};
  return j;
}

BenchReport bench(const MultiViewIndex& index, const std::vector<ViewMatrix>& queries, const RouterParams& router,
                  const BenchOptions& opts) {
  if (queries.empty()) throw ConfigError("bench: no queries");
  if (opts.reps == 0) throw ConfigError("bench: reps must be >= 1");
  BenchReport r;
  r.index_kind = to_string(index.kind());
  r.queries = queries.size();
  r.reps = opts.reps;
  r.top_k = opts.top_k;
  r.nprobe = opts.nprobe;
  RouteOptions ro;
  ro.tau = opts.tau;
  ro.epsilon = opts.epsilon;

  std::size_t sink = 0;
  for (auto scorer : opts.scorers) {
    BenchPath p;
    p.scorer = scorer;
    for (std::size_t rep = 0; rep <= opts.reps; ++rep) {
      std::size_t scanned = 0, probes = 0;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& q : queries) {
        SearchResult res;
        switch (scorer) {
          case ScorerKind::sum_max: res = index.search_sum_max(q, opts.top_k, opts.nprobe); break;
          case ScorerKind::max_max: res = index.search_max_max(q, opts.top_k, opts.nprobe); break;
          case ScorerKind::routed: res = index.search_routed(q, route(q, router, ro, nullptr), opts.top_k, opts.nprobe); break;
          case ScorerKind::single_view: res = index.search(cls_view(q), opts.top_k, opts.nprobe); break;
          case ScorerKind::mean_view: res = index.search(mean_view(q), opts.top_k, opts.nprobe); break;
        }
        scanned += res.vectors_scanned;
        probes += res.probes_done;
        sink += res.hits.size();
      }
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      if (rep == 0) continue;  // warmup
      p.rep_seconds.push_back(dt.count());
      p.vectors_scanned = scanned;
      p.probes = probes;
    }
    std::vector<double> per_query;
    for (double s : p.rep_seconds) per_query.push_back(s / static_cast<double>(queries.size()));
    p.median_seconds_per_query = median(per_query);
    r.paths.push_back(std::move(p));
  }
  if (sink == 0) throw IndexError("bench: searches returned no hits");
  return r;
}

}  // namespace fastlane
