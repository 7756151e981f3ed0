#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fastlane {

struct Document {
  std::string id;
  std::string text;
};

// Ordered records with unique ids and dense ordinals.
class Corpus {
 public:
  // Throws IngestError on a duplicate id; `where` prefixes the message.
  void add(std::string id, std::string text, const std::string& where = {});

  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& records() const noexcept { return docs_; }
  std::optional<std::size_t> ordinal(const std::string& id) const;
  const Document& get(const std::string& id) const;

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSONL records {"id", "text"}; lines starting with anything but '{' are
// read as `id \t text`. Blank lines are skipped. Errors name the file line.
Corpus load_corpus(const std::string& path);
void write_corpus(const std::string& path, const Corpus& corpus);

struct Query {
  std::string id;
  std::string text;
};

// `qid \t text` or JSONL {"id", "text"}.
std::vector<Query> load_queries(const std::string& path);
void write_queries(const std::string& path, const std::vector<Query>& queries);

struct Triplet {
  std::string query;
  std::string positive;
  std::string negative;
  // Set for id-based triplets.
  std::string query_id, positive_id, negative_id;
};

// Text triplets `query \t pos_text \t neg_text`, or, when `corpus` and
// `queries` are given, id-based `qid \t pos_id \t neg_id` resolved against them.
std::vector<Triplet> load_triplets(const std::string& path, const Corpus* corpus = nullptr,
                                   const std::vector<Query>* queries = nullptr);
void write_id_triplets(const std::string& path, const std::vector<Triplet>& triplets);

}  // namespace fastlane
