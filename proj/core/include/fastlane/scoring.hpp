#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastlane/autodiff.hpp"
#include "fastlane/router.hpp"
#include "fastlane/view_matrix.hpp"

namespace fastlane {

// mean_view pools the valid token views of the query (CLS left out unless
// it is the only valid view) and scores the mean like a single routed view;
// it is the static pooled baseline.
enum class ScorerKind { single_view, sum_max, max_max, routed, mean_view };

std::string to_string(ScorerKind k);
ScorerKind scorer_from_string(const std::string& s);

struct Score {
  double value = 0.0;
  ScorerKind scorer = ScorerKind::single_view;
  std::optional<std::size_t> selected_view;  // routed only
};

// <cls(q), cls(d)>
Score score_single_view(const ViewMatrix& q, const ViewMatrix& d);
// sum over valid query views of the max over valid doc views.
Score score_sum_max(const ViewMatrix& q, const ViewMatrix& d);
// max over valid query views of the max over valid doc views.
Score score_max_max(const ViewMatrix& q, const ViewMatrix& d);
// max over valid doc views of <q_selected, d_j>.
Score score_routed(const ViewMatrix& q, const ViewMatrix& d, const RoutingOutput& r);
// max over valid doc views of <mean_view(q), d_j>.
Score score_mean_view(const ViewMatrix& q, const ViewMatrix& d);

// Mean of the valid rows after row 0 (CLS); row 0 alone if nothing else is valid.
std::vector<double> mean_view(const ViewMatrix& q);

// --- differentiable batch forms ------------------------------------------
//
// Candidate documents are stacked row-wise into one [T x dims] matrix of
// valid views; `offsets` (size n_docs + 1) delimits each document.

struct DocBatch {
  Var views;
  std::vector<std::size_t> offsets;
  std::size_t size() const noexcept { return offsets.size() - 1; }
};

// Stacks the valid rows of each encoded document.
DocBatch stack_documents(const std::vector<Var>& docs, const std::vector<std::vector<std::uint8_t>>& valid);

// One query vector [1 x dims] against every document -> [n_docs].
Var single_vector_scores(Var query_vec, const DocBatch& docs);
// Query views [m x dims] (valid only) -> sum-max scores [n_docs].
Var sum_max_scores(Var query_views, const DocBatch& docs);
// Query views [m x dims] (valid only) -> max-max scores [n_docs].
Var max_max_scores(Var query_views, const DocBatch& docs);

}  // namespace fastlane
