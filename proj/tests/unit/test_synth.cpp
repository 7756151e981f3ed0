#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fastlane/errors.hpp"
#include "fastlane/index.hpp"
#include "fastlane/metrics.hpp"
#include "fastlane/synth.hpp"
#include "fastlane/tokenizer.hpp"

using namespace fastlane;

namespace {

SynthConfig small(double ambiguity) {
  SynthConfig c;
  c.n_docs = 400;
  c.dims = 32;
  c.n_dev = 100;
  c.ambiguity_rate = ambiguity;
  return c;
}

// MRR@10 of dev queries whose query vector is chosen by `pick` from the ideal views.
template <class Pick>
double dev_mrr(const SynthCorpus& s, Pick pick) {
  std::vector<ViewMatrix> docs;
  for (const auto& d : s.corpus.records()) docs.push_back(s.ideal_views(d.text, d.id));
  auto idx = FlatIndex::build(views_from_matrices(docs));
  Run run;
  for (const auto& q : s.dev_queries) {
    auto v = s.ideal_views(q.text, q.id);
    auto hits = idx.search(pick(v, Tokenizer::split(q.text)), 10, 1).hits;
    RunList r{q.id, {}};
    for (const auto& h : hits) r.ranked.push_back({h.doc_id, h.score});
    run[q.id] = r;
  }
  return evaluate(run, s.dev_qrels, {parse_metric("mrr@10")}).values.at("mrr@10");
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Synth, ShapeOfCorpus) {
  auto s = synth_corpus(small(0.8));
  EXPECT_EQ(s.corpus.size(), 400u);
  EXPECT_EQ(s.corpus[0].id, "d00000");
  EXPECT_EQ(s.dev_queries.size(), 100u);
  EXPECT_EQ(s.triplets.size(), 400u);
  EXPECT_EQ(s.dev_qrels.size(), 100u);
  auto v = s.ideal_views(s.corpus[3].text, "x");
  EXPECT_EQ(v.views(), 8u);
  EXPECT_EQ(v.dims(), 32u);
  for (std::size_t r = 0; r < v.views(); ++r) EXPECT_NEAR(norm(v.view(r)), 1.0, 1e-12);
  for (const auto& t : s.triplets) EXPECT_NE(t.positive_id, t.negative_id);
  std::size_t amb = 0;
  for (auto a : s.dev_ambiguous) amb += a;
  EXPECT_NEAR(amb / 100.0, 0.8, 0.15);
}

TEST(Synth, PrototypesAreOrthonormal) {
  auto s = synth_corpus(small(0.5));
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k < 32; ++k) d += s.prototypes.at(a, k) * s.prototypes.at(b, k);
      EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Synth, EntityViewRetrievesEveryTarget) {
  auto s = synth_corpus(small(1.0));
  auto entity = [](const ViewMatrix& v, const std::vector<std::string>& words) {
    std::size_t r = 0;
    while (words[r].rfind("ent", 0) != 0) ++r;
    return std::vector<double>(v.view(r + 1).begin(), v.view(r + 1).end());
  };
  EXPECT_EQ(dev_mrr(s, entity), 1.0);
}

TEST(Synth, PoolingSolvesOnlyUnambiguousQueries) {
  auto pooled = [](const ViewMatrix& v, const std::vector<std::string>&) {
    std::vector<double> m(v.dims(), 0.0);
    for (std::size_t r = 1; r < v.views(); ++r)
      for (std::size_t k = 0; k < v.dims(); ++k) m[k] += v.rows.at(r, k) / static_cast<double>(v.views() - 1);
    return m;
  };
  EXPECT_EQ(dev_mrr(synth_corpus(small(0.0)), pooled), 1.0);
  EXPECT_LE(dev_mrr(synth_corpus(small(1.0)), pooled), 0.75);
}

TEST(Synth, WideQueryHasRequestedViews) {
  auto s = synth_corpus(small(0.8));
  Rng rng(1);
  auto q = s.wide_query(5, 30, rng, "w");
  EXPECT_EQ(q.views(), 30u);
  const auto entity = s.word_vectors.row(s.word_row.at("ent00005"));
  EXPECT_EQ(std::vector<double>(q.view(1).begin(), q.view(1).end()), std::vector<double>(entity.begin(), entity.end()));
}

TEST(Synth, SameSeedSameCorpus) {
  auto a = synth_corpus(small(0.8)), b = synth_corpus(small(0.8));
  for (std::size_t i = 0; i < a.corpus.size(); ++i) EXPECT_EQ(a.corpus[i].text, b.corpus[i].text);
  EXPECT_EQ(a.word_vectors, b.word_vectors);
  auto c = small(0.8);
  c.seed = 8;
  EXPECT_NE(synth_corpus(c).word_vectors, a.word_vectors);
}

TEST(Synth, ConfigValidation) {
  auto c = small(0.5);
  c.n_intents = 40;
  EXPECT_THROW(synth_corpus(c), ConfigError);
  c = small(1.5);
  EXPECT_THROW(synth_corpus(c), ConfigError);
  c = small(0.5);
  c.views_per_doc = 2;
  EXPECT_THROW(synth_corpus(c), ConfigError);
}

TEST(Synth, WriteProducesAllFiles) {
  auto dir = std::filesystem::temp_directory_path() / "fl_synth";
  std::filesystem::remove_all(dir);
  write_synth(dir.string(), synth_corpus(small(0.8)));
  for (const char* f : {"corpus.jsonl", "train_queries.tsv", "triplets.tsv", "dev_queries.tsv", "dev.qrels",
                        "doc_embeddings/manifest.jsonl", "dev_query_embeddings/manifest.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  auto corpus = load_corpus((dir / "corpus.jsonl").string());
  auto qs = load_queries((dir / "train_queries.tsv").string());
  EXPECT_EQ(load_triplets((dir / "triplets.tsv").string(), &corpus, &qs).size(), 400u);
}
