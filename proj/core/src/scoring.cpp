#include "fastlane/scoring.hpp"

#include <algorithm>
#include <limits>

#include "fastlane/errors.hpp"

namespace fastlane {

std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::single_view: return "single_view";
    case ScorerKind::sum_max: return "sum_max";
    case ScorerKind::max_max: return "max_max";
    case ScorerKind::routed: return "routed";
    case ScorerKind::mean_view: return "mean_view";
  }
  return "?";
}

ScorerKind scorer_from_string(const std::string& s) {
  for (auto k : {ScorerKind::single_view, ScorerKind::sum_max, ScorerKind::max_max, ScorerKind::routed,
                 ScorerKind::mean_view}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown scorer '" + s + "' (expected single_view, sum_max, max_max, routed or mean_view)");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_pair(const ViewMatrix& q, const ViewMatrix& d) {
  if (q.dims() != d.dims()) {
    throw DimensionError("query dims " + std::to_string(q.dims()) + " != document dims " + std::to_string(d.dims()));
  }
  if (q.valid_count() == 0 || d.valid_count() == 0) {
    throw ScoringError("no valid views in '" + (q.valid_count() == 0 ? q.owner_id : d.owner_id) + "'");
  }
}

double max_over_doc(std::span<const double> qv, const ViewMatrix& d) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d.views(); ++j)
    if (d.is_valid(j)) best = std::max(best, dot(qv, d.view(j)));
  return best;
}

}  // namespace

Score score_single_view(const ViewMatrix& q, const ViewMatrix& d) {
  if (q.dims() != d.dims()) {
    throw DimensionError("query dims " + std::to_string(q.dims()) + " != document dims " + std::to_string(d.dims()));
  }
  return {dot(cls_view(q), cls_view(d)), ScorerKind::single_view, std::nullopt};
}

Score score_sum_max(const ViewMatrix& q, const ViewMatrix& d) {
  check_pair(q, d);
  double s = 0.0;
  for (std::size_t i = 0; i < q.views(); ++i)
    if (q.is_valid(i)) s += max_over_doc(q.view(i), d);
  return {s, ScorerKind::sum_max, std::nullopt};
}

Score score_max_max(const ViewMatrix& q, const ViewMatrix& d) {
  check_pair(q, d);
  double s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.views(); ++i)
    if (q.is_valid(i)) s = std::max(s, max_over_doc(q.view(i), d));
  return {s, ScorerKind::max_max, std::nullopt};
}

Score score_routed(const ViewMatrix& q, const ViewMatrix& d, const RoutingOutput& r) {
  check_pair(q, d);
  if (r.selected >= q.views() || !q.is_valid(r.selected)) {
    throw RoutingError("routed score: selected view " + std::to_string(r.selected) + " is not a valid view of '" +
                       q.owner_id + "'");
  }
  return {max_over_doc(q.view(r.selected), d), ScorerKind::routed, r.selected};
}

std::vector<double> mean_view(const ViewMatrix& q) {
  auto rows = q.valid_indices();
  if (rows.empty()) throw ScoringError("no valid views in '" + q.owner_id + "'");
  if (rows.size() > 1 && rows.front() == 0) rows.erase(rows.begin());
  std::vector<double> m(q.dims(), 0.0);
  for (auto i : rows) {
    const auto v = q.view(i);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += v[k];
  }
  for (auto& x : m) x /= static_cast<double>(rows.size());
  return m;
}

Score score_mean_view(const ViewMatrix& q, const ViewMatrix& d) {
  check_pair(q, d);
  return {max_over_doc(mean_view(q), d), ScorerKind::mean_view, std::nullopt};
}

DocBatch stack_documents(const std::vector<Var>& docs, const std::vector<std::vector<std::uint8_t>>& valid) {
  if (docs.empty()) throw ScoringError("stack_documents: no documents");
  if (valid.size() != docs.size()) throw DimensionError("stack_documents: mask count mismatch");
  DocBatch b;
  b.offsets.push_back(0);
  std::vector<Var> parts;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < valid[i].size(); ++r)
      if (valid[i][r]) rows.push_back(r);
    if (rows.empty()) throw ScoringError("stack_documents: document without valid views");
    parts.push_back(rows.size() == valid[i].size() ? docs[i] : ad::gather_rows(docs[i], rows));
    b.offsets.push_back(b.offsets.back() + rows.size());
  }
  b.views = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  return b;
}

Var single_vector_scores(Var query_vec, const DocBatch& docs) {
  const std::size_t n = docs.size();
  Var sims = ad::matmul(query_vec, ad::transpose(docs.views));  // [1 x T]
  return ad::reshape(ad::segment_max_cols(sims, docs.offsets), {n});
}

Var sum_max_scores(Var query_views, const DocBatch& docs) {
  Var sims = ad::matmul(query_views, ad::transpose(docs.views));  // [m x T]
  return ad::sum_axis(ad::segment_max_cols(sims, docs.offsets), 0);
}

Var max_max_scores(Var query_views, const DocBatch& docs) {
  Var sims = ad::matmul(query_views, ad::transpose(docs.views));
  return ad::max_axis(ad::segment_max_cols(sims, docs.offsets), 0).value;
}

}  // namespace fastlane
