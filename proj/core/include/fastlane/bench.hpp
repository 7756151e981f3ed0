#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastlane/index.hpp"
#include "fastlane/scoring.hpp"

namespace fastlane {

struct BenchPath {
  ScorerKind scorer = ScorerKind::sum_max;
  double median_seconds_per_query = 0.0;
  std::vector<double> rep_seconds;  // whole query set, per timed rep
  std::size_t vectors_scanned = 0;  // over the query set, one rep
  std::size_t probes = 0;
};

struct BenchReport {
  std::string index_kind;
  std::size_t queries = 0;
  std::size_t reps = 0;
  std::size_t top_k = 10;
  std::size_t nprobe = 1;
  std::vector<BenchPath> paths;

  const BenchPath& path(ScorerKind k) const;
  // sum_max over routed.
  double wallclock_speedup() const;
  double scan_ratio() const;
  double probe_ratio() const;

  nlohmann::json to_json() const;
};

struct BenchOptions {
  std::size_t reps = 5;  // timed reps; one extra warmup rep is run first
  std::size_t top_k = 10;
  std::size_t nprobe = 8;
  std::vector<ScorerKind> scorers{ScorerKind::sum_max, ScorerKind::routed, ScorerKind::single_view};
  double tau = 0.1;
  double epsilon = 0.05;
};

// Routed timings include the routing head itself (deterministic mode).
BenchReport bench(const MultiViewIndex& index, const std::vector<ViewMatrix>& queries, const RouterParams& router,
                  const BenchOptions& opts);

}  // namespace fastlane
