#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fastlane {

using TokenId = std::uint32_t;

// Lower-cased whitespace tokenizer. Id layout:
//   0                         [PAD]
//   1                         [CLS]
//   [2, 2 + table_capacity)   fitted word table, most frequent first
//   [vocab - buckets, vocab)  FNV-1a hash buckets for words outside the table
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kCls = 1;

  Tokenizer(std::size_t vocab_size, std::size_t hash_buckets);

  // Fills the word table from the given texts (frequency desc, then lexical).
  void fit(std::span<const std::string> texts);

  std::vector<TokenId> encode(std::string_view text) const;
  static std::vector<std::string> split(std::string_view text);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t hash_buckets() const noexcept { return hash_buckets_; }
  std::size_t table_capacity() const noexcept { return vocab_size_ - 2 - hash_buckets_; }
  std::size_t table_size() const noexcept { return words_.size(); }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  TokenId hash_bucket(std::string_view word) const;

  std::size_t vocab_size_;
  std::size_t hash_buckets_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace fastlane
