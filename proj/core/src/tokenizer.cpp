#include "fastlane/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <nlohmann/json.hpp>

#include "fastlane/errors.hpp"

namespace fastlane {

Tokenizer::Tokenizer(std::size_t vocab_size, std::size_t hash_buckets)
    : vocab_size_(vocab_size), hash_buckets_(hash_buckets) {
  if (hash_buckets_ == 0) throw ConfigError("tokenizer: hash_buckets must be >= 1");
  if (vocab_size_ < hash_buckets_ + 2) throw ConfigError("tokenizer: vocab_size too small for hash_buckets + 2");
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void Tokenizer::fit(std::span<const std::string> texts) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : split(t)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  words_.clear();
  ids_.clear();
  for (const auto& [w, n] : ranked) {
    if (words_.size() == table_capacity()) break;
    ids_.emplace(w, static_cast<TokenId>(2 + words_.size()));
    words_.push_back(w);
  }
}

TokenId Tokenizer::hash_bucket(std::string_view word) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (char ch : word) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return static_cast<TokenId>(vocab_size_ - hash_buckets_ + h % hash_buckets_);
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& w : split(text)) {
    auto it = ids_.find(w);
    out.push_back(it != ids_.end() ? it->second : hash_bucket(w));
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const {
  return {{"vocab_size", vocab_size_}, {"hash_buckets", hash_buckets_}, {"words", words_}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer t(j.at("vocab_size").get<std::size_t>(), j.at("hash_buckets").get<std::size_t>());
  t.words_ = j.at("words").get<std::vector<std::string>>();
  if (t.words_.size() > t.table_capacity()) throw FormatError("tokenizer: word table exceeds capacity");
  for (std::size_t i = 0; i < t.words_.size(); ++i) t.ids_.emplace(t.words_[i], static_cast<TokenId>(2 + i));
  return t;
}

}  // namespace fastlane
