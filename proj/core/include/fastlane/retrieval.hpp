#pragma once

// Glue between a model, an index and query sets.

#include <cstddef>
#include <vector>

#include "fastlane/data_io.hpp"
#include "fastlane/index.hpp"
#include "fastlane/metrics.hpp"
#include "fastlane/model.hpp"

namespace fastlane {

std::vector<ViewMatrix> encode_corpus(const Model& model, const Corpus& corpus);
std::vector<ViewMatrix> encode_queries(const Model& model, const std::vector<Query>& queries);

struct SearchStats {
  std::size_t queries = 0;
  std::size_t probes = 0;
  std::size_t vectors_scanned = 0;
  std::vector<std::size_t> selected_views;  // routed scorer only, one per query
};

// One index search (or m of them for sum_max / max_max) per query, dispatched
// on the scorer: routed uses the model's router; single_view the CLS row;
// mean_view the mean of the valid rows.
SearchResult search_one(const Model* model, const MultiViewIndex& index, const ViewMatrix& q, ScorerKind scorer,
                        std::size_t top_k, std::size_t nprobe, std::size_t* selected = nullptr);

Run search_all(const Model* model, const MultiViewIndex& index, const std::vector<ViewMatrix>& queries,
               ScorerKind scorer, std::size_t top_k, std::size_t nprobe, SearchStats* stats = nullptr);

}  // namespace fastlane
