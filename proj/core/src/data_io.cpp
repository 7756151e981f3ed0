#include "fastlane/data_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {

std::string where(const std::string& path, std::size_t line) { return path + ": line " + std::to_string(line); }

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

void chomp(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto tab = s.find('\t', start);
    out.push_back(s.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

// One {"id", "text"} JSON record or an `id \t text` line.
std::pair<std::string, std::string> parse_record(const std::string& line, const std::string& at) {
  if (line.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(at + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text")) throw IngestError(at + ": record needs \"id\" and \"text\"");
    if (!j["text"].is_string()) throw IngestError(at + ": \"text\" must be a string");
    std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (id.empty()) throw IngestError(at + ": empty id");
    return {std::move(id), j["text"].get<std::string>()};
  }
  auto tab = line.find('\t');
  if (tab == std::string::npos || tab == 0) throw IngestError(at + ": expected `id<TAB>text`");
  return {line.substr(0, tab), line.substr(tab + 1)};
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void Corpus::add(std::string id, std::string text, const std::string& at) {
  if (index_.count(id)) {
    throw IngestError((at.empty() ? std::string("corpus") : at) + ": duplicate id '" + id + "'");
  }
  index_.emplace(id, docs_.size());
  docs_.push_back({std::move(id), std::move(text)});
}

std::optional<std::size_t> Corpus::ordinal(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Document& Corpus::get(const std::string& id) const {
  auto o = ordinal(id);
  if (!o) throw IngestError("unknown doc id '" + id + "'");
  return docs_[*o];
}

Corpus load_corpus(const std::string& path) {
  auto in = open_in(path);
  Corpus c;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    chomp(line);
    if (blank(line)) continue;
    auto [id, text] = parse_record(line, where(path, n));
    c.add(std::move(id), std::move(text), where(path, n));
  }
  return c;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  auto out = open_out(path);
  for (const auto& d : corpus.records()) out << nlohmann::json{{"id", d.id}, {"text", d.text}}.dump() << '\n';
}

std::vector<Query> load_queries(const std::string& path) {
  auto in = open_in(path);
  std::vector<Query> qs;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    chomp(line);
    if (blank(line)) continue;
    auto [id, text] = parse_record(line, where(path, n));
    if (!seen.emplace(id, n).second) throw IngestError(where(path, n) + ": duplicate query id '" + id + "'");
    qs.push_back({std::move(id), std::move(text)});
  }
  return qs;
}

void write_queries(const std::string& path, const std::vector<Query>& queries) {
  auto out = open_out(path);
  for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
}

std::vector<Triplet> load_triplets(const std::string& path, const Corpus* corpus, const std::vector<Query>* queries) {
  auto in = open_in(path);
  std::unordered_map<std::string, const Query*> qmap;
  if (queries)
    for (const auto& q : *queries) qmap[q.id] = &q;
  const bool by_id = corpus != nullptr && queries != nullptr;
  std::vector<Triplet> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    chomp(line);
    if (blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 3) throw IngestError(where(path, n) + ": expected 3 tab-separated fields, got " + std::to_string(f.size()));
    Triplet t;
    if (by_id) {
      auto q = qmap.find(f[0]);
      if (q == qmap.end()) throw IngestError(where(path, n) + ": unknown query id '" + f[0] + "'");
      auto p = corpus->ordinal(f[1]);
      auto g = corpus->ordinal(f[2]);
      if (!p) throw IngestError(where(path, n) + ": unknown doc id '" + f[1] + "'");
      if (!g) throw IngestError(where(path, n) + ": unknown doc id '" + f[2] + "'");
      t = {q->second->text, (*corpus)[*p].text, (*corpus)[*g].text, f[0], f[1], f[2]};
      if (f[1] == f[2]) throw IngestError(where(path, n) + ": positive and negative are the same document");
    } else {
      t = {f[0], f[1], f[2], {}, {}, {}};
      if (f[1] == f[2]) throw IngestError(where(path, n) + ": positive and negative texts are identical");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_id_triplets(const std::string& path, const std::vector<Triplet>& triplets) {
  auto out = open_out(path);
  for (const auto& t : triplets) out << t.query_id << '\t' << t.positive_id << '\t' << t.negative_id << '\n';
}

}  // namespace fastlane
