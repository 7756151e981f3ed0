#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "fastlane/errors.hpp"
#include "fastlane/index.hpp"
#include "gradcheck.hpp"

using namespace fastlane;
namespace fs = std::filesystem;

namespace {

std::vector<ViewMatrix> random_docs(std::size_t n, std::size_t views, std::size_t d, Rng& rng) {
  std::vector<ViewMatrix> docs;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "doc%03zu", i);
    docs.push_back(ViewMatrix::from_rows(id, gradcheck::random_tensor({views, d}, rng)));
  }
  return docs;
}

// Full scan over f32-stored vectors: per-document max, score desc, id asc.
std::vector<std::pair<std::string, double>> oracle(const std::vector<ViewMatrix>& docs, std::span<const double> q,
                                                   std::size_t k) {
  std::vector<std::pair<std::string, double>> all;
  for (const auto& d : docs) {
    double best = -1e300;
    for (std::size_t r = 0; r < d.views(); ++r) {
      if (!d.is_valid(r)) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < d.dims(); ++j) s += q[j] * static_cast<double>(static_cast<float>(d.rows.at(r, j)));
      best = std::max(best, s);
    }
    all.emplace_back(d.owner_id, best);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / name).string(); }

}  // namespace

TEST(Index, FlatMatchesFullScanExactly) {
  Rng rng(1);
  auto docs = random_docs(200, 5, 8, rng);
  docs[3].valid[2] = 0;
  auto idx = FlatIndex::build(views_from_matrices(docs));
  EXPECT_EQ(idx.size(), 200u * 5 - 1);
  EXPECT_EQ(idx.doc_count(), 200u);
  for (int t = 0; t < 20; ++t) {
    auto q = gradcheck::random_tensor({8}, rng);
    auto got = idx.search(q.data(), 10, 1);
    auto want = oracle(docs, q.data(), 10);
    ASSERT_EQ(got.hits.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.hits[i].doc_id, want[i].first);
      EXPECT_EQ(got.hits[i].score, want[i].second);
    }
    EXPECT_EQ(got.vectors_scanned, idx.size());
    EXPECT_EQ(got.probes_done, 1u);
  }
}

TEST(Index, TiesBreakByDocId) {
  std::vector<IndexedView> v{{"b", 0, {1.0f, 0.0f}}, {"a", 0, {1.0f, 0.0f}}, {"c", 0, {0.5f, 0.0f}}};
  auto idx = FlatIndex::build(v);
  std::vector<double> q{1.0, 0.0};
  auto r = idx.search(q, 3, 1);
  EXPECT_EQ(r.hits[0].doc_id, "a");
  EXPECT_EQ(r.hits[1].doc_id, "b");
  EXPECT_EQ(r.hits[2].doc_id, "c");
}

TEST(Index, TopKLargerThanCorpus) {
  Rng rng(2);
  auto docs = random_docs(4, 2, 3, rng);
  auto idx = FlatIndex::build(views_from_matrices(docs));
  std::vector<double> q{1.0, 0.0, 0.0};
  EXPECT_EQ(idx.search(q, 100, 1).hits.size(), 4u);
}

TEST(Index, SumMaxAndMaxMaxMatchPairwiseScores) {
  Rng rng(3);
  auto docs = random_docs(50, 4, 6, rng);
  auto idx = FlatIndex::build(views_from_matrices(docs));
  auto q = ViewMatrix::from_rows("q", gradcheck::random_tensor({3, 6}, rng));
  auto sm = idx.search_sum_max(q, 50, 1);
  auto mm = idx.search_max_max(q, 50, 1);
  std::map<std::string, double> want_sum, want_max;
  for (const auto& d : docs) {
    double s = 0.0, m = -1e300;
    for (std::size_t i = 0; i < 3; ++i) {
      auto best = oracle({d}, q.view(i), 1)[0].second;
      s += best;
      m = std::max(m, best);
    }
    want_sum[d.owner_id] = s;
    want_max[d.owner_id] = m;
  }
  ASSERT_EQ(sm.hits.size(), 50u);
  for (const auto& h : sm.hits) EXPECT_EQ(h.score, want_sum[h.doc_id]);
  for (const auto& h : mm.hits) EXPECT_EQ(h.score, want_max[h.doc_id]);
  EXPECT_EQ(sm.vectors_scanned, 3 * idx.size());
  EXPECT_EQ(sm.probes_done, 3u);
}

TEST(Index, RoutedIsOneSearch) {
  Rng rng(4);
  auto docs = random_docs(30, 3, 4, rng);
  auto idx = FlatIndex::build(views_from_matrices(docs));
  auto q = ViewMatrix::from_rows("q", gradcheck::random_tensor({5, 4}, rng));
  RoutingOutput r;
  r.selected = 2;
  auto got = idx.search_routed(q, r, 5, 1);
  auto want = idx.search(q.view(2), 5, 1);
  EXPECT_EQ(got.vectors_scanned, idx.size());
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(got.hits[i].doc_id, want.hits[i].doc_id);
  q.valid[2] = 0;
  EXPECT_THROW(idx.search_routed(q, r, 5, 1), RoutingError);
}

TEST(Index, IvfFullProbeEqualsFlat) {
  Rng rng(5);
  auto docs = random_docs(300, 4, 8, rng);
  auto views = views_from_matrices(docs);
  auto flat = FlatIndex::build(views);
  KMeansOptions o;
  o.k = 16;
  o.seed = 9;
  auto ivf = IvfIndex::build(views, o);
  EXPECT_EQ(ivf.list_count(), 16u);
  std::size_t total = 0;
  for (std::size_t c = 0; c < 16; ++c) total += ivf.list_size(c);
  EXPECT_EQ(total, views.size());
  for (int t = 0; t < 10; ++t) {
    auto q = gradcheck::random_tensor({8}, rng);
    auto a = flat.search(q.data(), 10, 1);
    auto b = ivf.search(q.data(), 10, 16);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(a.hits[i].doc_id, b.hits[i].doc_id);
      EXPECT_EQ(a.hits[i].score, b.hits[i].score);
    }
    EXPECT_EQ(b.vectors_scanned, views.size() + 16);
    auto small = ivf.search(q.data(), 10, 2);
    EXPECT_EQ(small.probes_done, 2u);
    EXPECT_LT(small.vectors_scanned, b.vectors_scanned);
  }
}

TEST(Index, IvfBuildIsDeterministic) {
  Rng rng(6);
  auto views = views_from_matrices(random_docs(100, 3, 4, rng));
  KMeansOptions o;
  o.k = 8;
  o.seed = 3;
  auto a = IvfIndex::build(views, o);
  auto b = IvfIndex::build(views, o);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(a.list_members(c), b.list_members(c));
}

TEST(Index, KMeansSeparatesObviousClusters) {
  std::vector<float> data;
  for (int i = 0; i < 20; ++i) {
    data.push_back(i < 10 ? 10.0f + 0.01f * i : -10.0f - 0.01f * i);
    data.push_back(0.0f);
  }
  KMeansOptions o;
  o.k = 2;
  auto r = kmeans(data, 20, 2, o);
  for (int i = 1; i < 10; ++i) EXPECT_EQ(r.assignment[i], r.assignment[0]);
  for (int i = 11; i < 20; ++i) EXPECT_EQ(r.assignment[i], r.assignment[10]);
  EXPECT_NE(r.assignment[0], r.assignment[10]);
}

TEST(Index, SaveLoadRoundTrip) {
  Rng rng(7);
  auto views = views_from_matrices(random_docs(60, 3, 5, rng));
  KMeansOptions o;
  o.k = 4;
  auto ivf = IvfIndex::build(views, o);
  auto flat = FlatIndex::build(views);
  const auto ivf_path = temp_path("fastlane_ivf.flix"), flat_path = temp_path("fastlane_flat.flix");
  ivf.save(ivf_path);
  flat.save(flat_path);
  auto ivf2 = IvfIndex::load(ivf_path);
  auto any = load_index(flat_path);
  EXPECT_EQ(any->kind(), IndexKind::flat);
  auto q = gradcheck::random_tensor({5}, rng);
  auto a = ivf.search(q.data(), 10, 2), b = ivf2.search(q.data(), 10, 2);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.hits[i].score, b.hits[i].score);
  EXPECT_EQ(flat.search(q.data(), 5, 1).hits[0].doc_id, any->search(q.data(), 5, 1).hits[0].doc_id);
  EXPECT_THROW(FlatIndex::load(ivf_path), IndexKindError);
  EXPECT_THROW(IvfIndex::load(flat_path), IndexKindError);
}

TEST(Index, CorruptOrMissingFile) {
  EXPECT_THROW(load_index(temp_path("fastlane_missing.flix")), IndexError);
  const auto path = temp_path("fastlane_corrupt.flix");
  Rng rng(8);
  FlatIndex::build(views_from_matrices(random_docs(10, 2, 3, rng))).save(path);
  fs::resize_file(path, fs::file_size(path) - 7);
  EXPECT_THROW(load_index(path), IndexError);
}

TEST(Index, BuildErrors) {
  EXPECT_THROW(FlatIndex::build({}), IndexError);
  std::vector<IndexedView> mixed{{"a", 0, {1.0f, 2.0f}}, {"b", 0, {1.0f}}};
  EXPECT_THROW(FlatIndex::build(mixed), DimensionError);
  std::vector<IndexedView> dup{{"a", 0, {1.0f}}, {"a", 0, {2.0f}}};
  EXPECT_THROW(FlatIndex::build(dup), IndexError);
  std::vector<IndexedView> ok{{"a", 0, {1.0f}}, {"b", 0, {2.0f}}};
  KMeansOptions o;
  o.k = 3;
  EXPECT_THROW(IvfIndex::build(ok, o), ConfigError);
  o.k = 0;
  EXPECT_THROW(IvfIndex::build(ok, o), ConfigError);
  auto idx = FlatIndex::build(ok);
  std::vector<double> bad{1.0, 2.0};
  EXPECT_THROW(idx.search(bad, 1, 1), DimensionError);
  std::vector<double> q{1.0};
  EXPECT_THROW(idx.search(q, 0, 1), ConfigError);
}
