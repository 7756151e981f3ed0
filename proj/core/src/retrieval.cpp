#include "fastlane/retrieval.hpp"

#include "fastlane/errors.hpp"

namespace fastlane {

std::vector<ViewMatrix> encode_corpus(const Model& model, const Corpus& corpus) {
  std::vector<ViewMatrix> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus.records()) out.push_back(model.encode(d.text, Tower::document, d.id));
  return out;
}

std::vector<ViewMatrix> encode_queries(const Model& model, const std::vector<Query>& queries) {
  std::vector<ViewMatrix> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(model.encode(q.text, Tower::query, q.id));
  return out;
}

SearchResult search_one(const Model* model, const MultiViewIndex& index, const ViewMatrix& q, ScorerKind scorer,
                        std::size_t top_k, std::size_t nprobe, std::size_t* selected) {
  switch (scorer) {
    case ScorerKind::routed: {
      if (!model) throw ConfigError("routed search needs a model checkpoint");
      const auto r = model->route(q);
      if (selected) *selected = r.selected;
      return index.search_routed(q, r, top_k, nprobe);
    }
    case ScorerKind::single_view:
      if (q.valid.empty() || !q.is_valid(0)) throw ScoringError("query '" + q.owner_id + "' has no CLS view");
      return index.search(cls_view(q), top_k, nprobe);
    case ScorerKind::mean_view: {
      const auto m = mean_view(q);
      return index.search(m, top_k, nprobe);
    }
    case ScorerKind::sum_max:
      return index.search_sum_max(q, top_k, nprobe);
    case ScorerKind::max_max:
      return index.search_max_max(q, top_k, nprobe);
  }
  throw ConfigError("unknown scorer");
}

Run search_all(const Model* model, const MultiViewIndex& index, const std::vector<ViewMatrix>& queries,
               ScorerKind scorer, std::size_t top_k, std::size_t nprobe, SearchStats* stats) {
  Run run;
  for (const auto& q : queries) {
    std::size_t sel = 0;
    const auto res = search_one(model, index, q, scorer, top_k, nprobe, &sel);
    RunList list{q.owner_id, {}};
    for (const auto& h : res.hits) list.ranked.push_back({h.doc_id, h.score});
    run[q.owner_id] = std::move(list);
    if (stats) {
      ++stats->queries;
      stats->probes += res.probes_done;
      stats->vectors_scanned += res.vectors_scanned;
      if (scorer == ScorerKind::routed) stats->selected_views.push_back(sel);
    }
  }
  return run;
}

}  // namespace fastlane
