#include "fastlane/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {

const std::map<std::string, int>* judged(const RunList& run, const Qrels& qrels) {
  auto it = qrels.find(run.query_id);
  if (it == qrels.end()) return nullptr;
  for (const auto& [doc, g] : it->second)
    if (g > 0) return &it->second;
  return nullptr;
}

int grade_of(const std::map<std::string, int>& j, const std::string& doc) {
  auto it = j.find(doc);
  return it == j.end() ? 0 : it->second;
}

void check_k(std::size_t k) {
  if (k == 0) throw ConfigError("metric cutoff k must be >= 1");
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunList::sort() {
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedDoc& a, const RankedDoc& b) {
    return a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id);
  });
  std::set<std::string> seen;
  for (const auto& r : ranked)
    if (!seen.insert(r.doc_id).second) throw FormatError("run for query " + query_id + " repeats doc " + r.doc_id);
}

std::optional<double> mrr_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  check_k(k);
  const auto* j = judged(run, qrels);
  if (!j) return std::nullopt;
  const std::size_t n = std::min(k, run.ranked.size());
  for (std::size_t i = 0; i < n; ++i)
    if (grade_of(*j, run.ranked[i].doc_id) > 0) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

std::optional<double> ndcg_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  check_k(k);
  const auto* j = judged(run, qrels);
  if (!j) return std::nullopt;
  auto gain = [](int g, std::size_t rank) { return (std::exp2(g) - 1.0) / std::log2(static_cast<double>(rank) + 1.0); };
  double dcg = 0.0;
  const std::size_t n = std::min(k, run.ranked.size());
  for (std::size_t i = 0; i < n; ++i) dcg += gain(grade_of(*j, run.ranked[i].doc_id), i + 1);
  std::vector<int> ideal;
  for (const auto& [doc, g] : *j)
    if (g > 0) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i], i + 1);
  return dcg / idcg;
}

std::optional<double> recall_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  check_k(k);
  const auto* j = judged(run, qrels);
  if (!j) return std::nullopt;
  std::size_t rel = 0, hit = 0;
  for (const auto& [doc, g] : *j) rel += g > 0;
  const std::size_t n = std::min(k, run.ranked.size());
  for (std::size_t i = 0; i < n; ++i) hit += grade_of(*j, run.ranked[i].doc_id) > 0;
  return static_cast<double>(hit) / static_cast<double>(rel);
}

std::string MetricSpec::name() const {
  const char* base = kind == Kind::mrr ? "mrr" : kind == Kind::ndcg ? "ndcg" : "recall";
  return std::string(base) + "@" + std::to_string(k);
}

MetricSpec parse_metric(const std::string& s) {
  const auto at = s.find('@');
  MetricSpec m;
  const std::string base = s.substr(0, at);
  if (base == "mrr") m.kind = MetricSpec::Kind::mrr;
  else if (base == "ndcg") m.kind = MetricSpec::Kind::ndcg;
  else if (base == "recall") m.kind = MetricSpec::Kind::recall;
  else throw ConfigError("unknown metric '" + s + "' (expected mrr@k, ndcg@k or recall@k)");
  if (at == std::string::npos) {
    if (m.kind == MetricSpec::Kind::recall) throw ConfigError("recall needs an explicit cutoff, e.g. recall@100");
    return m;
  }
  const std::string ks = s.substr(at + 1);
  auto [p, ec] = std::from_chars(ks.data(), ks.data() + ks.size(), m.k);
  if (ec != std::errc() || p != ks.data() + ks.size() || m.k == 0) throw ConfigError("bad metric cutoff in '" + s + "'");
  return m;
}

std::vector<MetricSpec> parse_metrics(const std::string& comma_list) {
  std::vector<MetricSpec> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_metric(item));
  if (out.empty()) throw ConfigError("no metrics requested");
  return out;
}

EvalSummary evaluate(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics) {
  EvalSummary s;
  std::map<std::string, double> sums;
  for (const auto& m : metrics) sums[m.name()] = 0.0;
  for (const auto& [qid, list] : run) {
    if (!judged(list, qrels)) {
      ++s.skipped;
      continue;
    }
    ++s.evaluated;
    for (const auto& m : metrics) {
      std::optional<double> v;
      switch (m.kind) {
        case MetricSpec::Kind::mrr: v = mrr_at_k(list, qrels, m.k); break;
        case MetricSpec::Kind::ndcg: v = ndcg_at_k(list, qrels, m.k); break;
        case MetricSpec::Kind::recall: v = recall_at_k(list, qrels, m.k); break;
      }
      sums[m.name()] += *v;
    }
  }
  for (auto& [name, total] : sums) s.values[name] = s.evaluated ? total / static_cast<double>(s.evaluated) : 0.0;
  return s;
}

Qrels read_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open qrels " + path);
  Qrels q;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, iter, doc;
    int grade = 0;
    if (!(ls >> qid >> iter >> doc >> grade)) throw FormatError(path + ":" + std::to_string(lineno) + ": malformed qrels line");
    if (grade < 0) throw FormatError(path + ":" + std::to_string(lineno) + ": negative grade");
    q[qid][doc] = grade;
  }
  return q;
}

void write_qrels(const std::string& path, const Qrels& qrels) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (const auto& [qid, docs] : qrels)
    for (const auto& [doc, g] : docs) out << qid << " 0 " << doc << ' ' << g << '\n';
}

Run read_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open run " + path);
  Run run;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, q0, doc, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(ls >> qid >> q0 >> doc >> rank >> score)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed run line");
    }
    auto& list = run[qid];
    list.query_id = qid;
    list.ranked.push_back({doc, score});
  }
  for (auto& [qid, list] : run) list.sort();
  return run;
}

void write_run(const std::string& path, const Run& run, const std::string& tag) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (const auto& [qid, list] : run) {
    std::size_t rank = 1;
    for (const auto& r : list.ranked) out << qid << " Q0 " << r.doc_id << ' ' << rank++ << ' ' << format_score(r.score) << ' ' << tag << '\n';
  }
}

}  // namespace fastlane
