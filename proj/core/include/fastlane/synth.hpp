#pragma once

// Synthetic "ambiguous query" corpus.
//
// Every document belongs to one intent and holds one unique entity word plus
// generic words of its intent. A query names the entity; an ambiguous query
// also repeats a generic word of another intent, so pooling the query views
// pulls it toward documents of the wrong intent while the entity view alone
// still identifies the relevant document.
//
// The generator also emits ideal embeddings: orthonormal intent prototypes,
// words scattered around their intent's prototype, one unit vector per word,
// and a CLS row (normalised mean of the word rows) in front.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fastlane/data_io.hpp"
#include "fastlane/metrics.hpp"
#include "fastlane/rng.hpp"
#include "fastlane/view_matrix.hpp"

namespace fastlane {

struct SynthConfig {
  std::size_t n_docs = 10000;
  std::size_t views_per_doc = 8;  // CLS + entity + generic words
  std::size_t n_intents = 6;
  std::size_t dims = 64;
  double ambiguity_rate = 0.8;
  std::uint64_t seed = 7;
  std::size_t generic_words = 16;     // vocabulary per intent
  std::size_t distractor_repeats = 4;  // copies of the distractor word in an ambiguous query
  std::size_t n_train = 0;            // training queries; 0: one per document
  std::size_t n_dev = 500;
  double entity_spread = 1.0;   // entity = normalize(prototype + spread * unit noise)
  double generic_spread = 0.5;

  void validate() const;
};

struct SynthCorpus {
  SynthConfig config;
  Corpus corpus;
  std::vector<std::size_t> doc_intent;
  std::vector<Query> train_queries;
  std::vector<Triplet> triplets;  // ids and texts filled
  std::vector<Query> dev_queries;
  Qrels dev_qrels;
  std::vector<std::uint8_t> dev_ambiguous;

  Tensor prototypes;                               // n_intents x dims
  Tensor word_vectors;                             // words x dims
  std::unordered_map<std::string, std::size_t> word_row;

  // CLS row, then one row per word of `text`.
  ViewMatrix ideal_views(const std::string& text, std::string owner_id) const;
  // CLS, the entity of document `doc` and `m - 2` generic words drawn from
  // other intents (m views in total).
  ViewMatrix wide_query(std::size_t doc, std::size_t m, Rng& rng, std::string owner_id) const;
};

SynthCorpus synth_corpus(const SynthConfig& cfg);

// corpus.jsonl, train_queries.tsv, triplets.tsv (id-based), dev_queries.tsv,
// dev.qrels, and the ideal embedding dumps doc_embeddings/ and
// dev_query_embeddings/.
void write_synth(const std::string& dir, const SynthCorpus& s);

}  // namespace fastlane
