#pragma once

// Rank-based retrieval metrics over TREC-style qrels and run files.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fastlane {

// query_id -> doc_id -> grade (>= 0).
using Qrels = std::map<std::string, std::map<std::string, int>>;

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

struct RunList {
  std::string query_id;
  std::vector<RankedDoc> ranked;

  // Score desc, doc_id asc on ties. Throws on duplicate doc ids.
  void sort();
};

// query_id -> ranking.
using Run = std::map<std::string, RunList>;

// nullopt when the query has no judged-relevant document (skipped).
std::optional<double> mrr_at_k(const RunList& run, const Qrels& qrels, std::size_t k = 10);
// Gain (2^g - 1) / log2(rank + 1), normalised by the ideal DCG over the qrels.
std::optional<double> ndcg_at_k(const RunList& run, const Qrels& qrels, std::size_t k = 10);
std::optional<double> recall_at_k(const RunList& run, const Qrels& qrels, std::size_t k);

struct MetricSpec {
  enum class Kind { mrr, ndcg, recall } kind = Kind::mrr;
  std::size_t k = 10;
  std::string name() const;
};
// "mrr@10", "ndcg@10", "recall@100".
MetricSpec parse_metric(const std::string& s);
std::vector<MetricSpec> parse_metrics(const std::string& comma_list);

struct EvalSummary {
  std::map<std::string, double> values;  // metric name -> mean over evaluated queries
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // absent from qrels or without a relevant document
};

EvalSummary evaluate(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics);

// `qid 0 docid grade`
Qrels read_qrels(const std::string& path);
void write_qrels(const std::string& path, const Qrels& qrels);
// `qid Q0 docid rank score tag`; rankings are re-sorted on read.
Run read_run(const std::string& path);
void write_run(const std::string& path, const Run& run, const std::string& tag);

}  // namespace fastlane
