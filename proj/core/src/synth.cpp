#include "fastlane/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "fastlane/errors.hpp"
#include "fastlane/tokenizer.hpp"

namespace fastlane {

namespace {

std::string entity_word(std::size_t d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ent%05zu", d);
  return buf;
}

std::string generic_word(std::size_t c, std::size_t k) { return "w" + std::to_string(c) + "_" + std::to_string(k); }

std::string doc_id(std::size_t d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "d%05zu", d);
  return buf;
}

std::vector<double> unit_noise(std::size_t dims, Rng& rng) {
  std::vector<double> v(dims);
  double n = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

void normalize(std::span<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_docs < 2 || views_per_doc < 3 || n_intents < 2 || dims == 0 || generic_words == 0) {
    throw ConfigError("synth: need docs >= 2, views >= 3, intents >= 2, dims and generic_words >= 1");
  }
  if (n_intents > dims) {
    throw ConfigError("synth: n_intents (" + std::to_string(n_intents) + ") exceeds dims (" + std::to_string(dims) + ")");
  }
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0) throw ConfigError("synth: ambiguity_rate must lie in [0, 1]");
  if (distractor_repeats == 0) throw ConfigError("synth: distractor_repeats must be >= 1");
  if (n_dev > n_docs) throw ConfigError("synth: n_dev exceeds n_docs");
  if (views_per_doc - 2 > generic_words) throw ConfigError("synth: views_per_doc - 2 exceeds generic_words");
}

ViewMatrix SynthCorpus::ideal_views(const std::string& text, std::string owner_id) const {
  const auto words = Tokenizer::split(text);
  if (words.empty()) throw ConfigError("synth: empty text");
  const std::size_t dims = prototypes.cols();
  Tensor rows({words.size() + 1, dims});
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = word_row.find(words[i]);
    if (it == word_row.end()) throw ConfigError("synth: unknown word '" + words[i] + "'");
    std::copy_n(word_vectors.row(it->second).begin(), dims, rows.row(i + 1).begin());
    for (std::size_t k = 0; k < dims; ++k) rows.at(0, k) += rows.at(i + 1, k);
  }
  normalize(rows.row(0));
  return ViewMatrix::from_rows(std::move(owner_id), std::move(rows));
}

ViewMatrix SynthCorpus::wide_query(std::size_t doc, std::size_t m, Rng& rng, std::string owner_id) const {
  if (m < 2) throw ConfigError("synth: a query needs at least two views (CLS and entity)");
  std::vector<std::string> words{entity_word(doc)};
  const std::size_t c = doc_intent.at(doc);
  while (words.size() + 1 < m) {
    std::size_t other = rng.index(config.n_intents - 1);
    if (other >= c) ++other;
    words.push_back(generic_word(other, rng.index(config.generic_words)));
  }
  return ideal_views(join(words), std::move(owner_id));
}

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus s;
  s.config = cfg;
  Rng rng(cfg.seed);
  Rng geo = rng.fork(1);
  Rng text = rng.fork(2);

  // Orthonormal prototypes by Gram-Schmidt.
  s.prototypes = Tensor({cfg.n_intents, cfg.dims});
  for (std::size_t c = 0; c < cfg.n_intents; ++c) {
    for (;;) {
      auto v = unit_noise(cfg.dims, geo);
      for (std::size_t p = 0; p < c; ++p) {
        const auto row = s.prototypes.row(p);
        const double d = std::inner_product(v.begin(), v.end(), row.begin(), 0.0);
        for (std::size_t k = 0; k < cfg.dims; ++k) v[k] -= d * row[k];
      }
      double n = 0.0;
      for (double x : v) n += x * x;
      if (n < 1e-6) continue;
      normalize(v);
      std::copy(v.begin(), v.end(), s.prototypes.row(c).begin());
      break;
    }
  }

  const std::size_t n_words = cfg.n_docs + cfg.n_intents * cfg.generic_words;
  s.word_vectors = Tensor({n_words, cfg.dims});
  auto place = [&](const std::string& word, std::size_t c, double spread) {
    const std::size_t r = s.word_row.size();
    s.word_row.emplace(word, r);
    auto noise = unit_noise(cfg.dims, geo);
    auto row = s.word_vectors.row(r);
    for (std::size_t k = 0; k < cfg.dims; ++k) row[k] = s.prototypes.at(c, k) + spread * noise[k];
    normalize(row);
  };
  for (std::size_t c = 0; c < cfg.n_intents; ++c)
    for (std::size_t k = 0; k < cfg.generic_words; ++k) place(generic_word(c, k), c, cfg.generic_spread);

  // Documents: intent round-robin then shuffled, entity at a random position.
  s.doc_intent.resize(cfg.n_docs);
  for (std::size_t d = 0; d < cfg.n_docs; ++d) s.doc_intent[d] = d % cfg.n_intents;
  std::shuffle(s.doc_intent.begin(), s.doc_intent.end(), text.engine());
  std::vector<std::vector<std::size_t>> doc_words(cfg.n_docs);
  std::vector<std::vector<std::size_t>> by_intent(cfg.n_intents);
  std::vector<std::size_t> pool(cfg.generic_words);
  for (std::size_t d = 0; d < cfg.n_docs; ++d) {
    const std::size_t c = s.doc_intent[d];
    place(entity_word(d), c, cfg.entity_spread);
    by_intent[c].push_back(d);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), text.engine());
    doc_words[d].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.views_per_doc - 2));
    std::vector<std::string> words;
    for (auto k : doc_words[d]) words.push_back(generic_word(c, k));
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(text.index(words.size() + 1)), entity_word(d));
    s.corpus.add(doc_id(d), join(words));
  }

  // A query for `d`: the entity alone, or (ambiguous) the entity plus a
  // generic word of another intent's document repeated; that document is the
  // hard negative.
  struct Made {
    std::string text;
    bool ambiguous;
    std::size_t negative;
  };
  auto make_query = [&](std::size_t d) {
    const std::size_t c = s.doc_intent[d];
    Made m{entity_word(d), false, 0};
    if (text.uniform() < cfg.ambiguity_rate) {
      std::size_t other = text.index(cfg.n_intents - 1);
      if (other >= c) ++other;
      const std::size_t neg = by_intent[other][text.index(by_intent[other].size())];
      const auto& ws = doc_words[neg];
      const std::string w = generic_word(other, ws[text.index(ws.size())]);
      std::vector<std::string> words(cfg.distractor_repeats, w);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(text.index(words.size() + 1)), entity_word(d));
      m = {join(words), true, neg};
    } else {
      std::size_t neg = text.index(cfg.n_docs - 1);
      if (neg >= d) ++neg;
      m.negative = neg;
    }
    return m;
  };

  const std::size_t n_train = cfg.n_train ? cfg.n_train : cfg.n_docs;
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::size_t d = cfg.n_train ? text.index(cfg.n_docs) : i;
    const auto m = make_query(d);
    Query q{"t" + std::to_string(i), m.text};
    const auto& pos = s.corpus[d];
    const auto& neg = s.corpus[m.negative];
    s.triplets.push_back({q.text, pos.text, neg.text, q.id, pos.id, neg.id});
    s.train_queries.push_back(std::move(q));
  }

  std::vector<std::size_t> docs(cfg.n_docs);
  std::iota(docs.begin(), docs.end(), 0);
  std::shuffle(docs.begin(), docs.end(), text.engine());
  for (std::size_t i = 0; i < cfg.n_dev; ++i) {
    const std::size_t d = docs[i];
    const auto m = make_query(d);
    Query q{"q" + std::to_string(i), m.text};
    s.dev_qrels[q.id][doc_id(d)] = 1;
    s.dev_ambiguous.push_back(m.ambiguous ? 1 : 0);
    s.dev_queries.push_back(std::move(q));
  }
  return s;
}

void write_synth(const std::string& dir, const SynthCorpus& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  write_corpus((root / "corpus.jsonl").string(), s.corpus);
  write_queries((root / "train_queries.tsv").string(), s.train_queries);
  write_id_triplets((root / "triplets.tsv").string(), s.triplets);
  write_queries((root / "dev_queries.tsv").string(), s.dev_queries);
  write_qrels((root / "dev.qrels").string(), s.dev_qrels);
  std::vector<ViewMatrix> docs, queries;
  for (const auto& d : s.corpus.records()) docs.push_back(s.ideal_views(d.text, d.id));
  for (const auto& q : s.dev_queries) queries.push_back(s.ideal_views(q.text, q.id));
  dump_embeddings((root / "doc_embeddings").string(), docs);
  dump_embeddings((root / "dev_query_embeddings").string(), queries);
}

}  // namespace fastlane
