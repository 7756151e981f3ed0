#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fastlane/analysis.hpp"
#include "fastlane/errors.hpp"
#include "fastlane/rng.hpp"

using namespace fastlane;

namespace {

// `groups` orthogonal directions, `per_group` noisy copies of each.
ViewMatrix planted(std::size_t groups, std::size_t per_group, std::size_t dims, double noise, Rng& rng,
                   std::string id = "m") {
  Tensor t({groups * per_group, dims});
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t c = 0; c < per_group; ++c) {
      auto row = t.row(g * per_group + c);
      for (auto& x : row) x = noise * rng.normal();
      row[g] += 1.0;
    }
  return ViewMatrix::from_rows(std::move(id), std::move(t));
}

}  // namespace

TEST(Analysis, SimilarityOracle) {
  auto v = ViewMatrix::from_rows("m", Tensor::matrix(3, 2, {1, 0, 1, 1, 0, 0}));
  auto s = similarity_matrix(v);
  EXPECT_EQ(s.views, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(s.excluded, (std::vector<std::size_t>{2}));
  EXPECT_EQ(s.values.at(0, 0), 1.0);
  EXPECT_NEAR(s.values.at(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(s.values.at(0, 1), s.values.at(1, 0));
}

TEST(Analysis, AllZeroIsError) {
  auto v = ViewMatrix::from_rows("z", Tensor({2, 3}));
  EXPECT_THROW(similarity_matrix(v), DimensionError);
}

TEST(Analysis, PlantedGroupsRecovered) {
  Rng rng(4);
  for (auto linkage : {Linkage::average, Linkage::complete}) {
    auto v = planted(5, 6, 16, 0.03, rng);
    auto r = agglomerative_cluster(similarity_matrix(v), 0.95, linkage);
    EXPECT_EQ(r.n_clusters, 5u) << to_string(linkage);
    for (std::size_t g = 0; g < 5; ++g)
      for (std::size_t c = 1; c < 6; ++c) EXPECT_EQ(r.assignment[g * 6 + c], r.assignment[g * 6]);
    EXPECT_EQ(r.assignment[0], 0u);
    EXPECT_EQ(r.assignment[6], 1u);
  }
}

TEST(Analysis, ClusterCountMonotoneInThreshold) {
  Rng rng(5);
  auto sim = similarity_matrix(planted(4, 5, 12, 0.3, rng));
  std::size_t prev = 0;
  for (double t : {-0.5, 0.0, 0.3, 0.6, 0.9, 0.99, 1.0}) {
    for (auto linkage : {Linkage::average, Linkage::complete}) {
      auto n = agglomerative_cluster(sim, t, linkage).n_clusters;
      if (linkage == Linkage::average) {
        EXPECT_GE(n, prev);
        prev = n;
      }
    }
  }
  EXPECT_EQ(agglomerative_cluster(sim, 1.0).n_clusters, 20u);
  EXPECT_THROW(agglomerative_cluster(sim, 1.5), ConfigError);
}

TEST(Analysis, CompleteLinkageNeverMergesMoreThanAverage) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    auto sim = similarity_matrix(planted(3, 4, 8, 0.5, rng));
    EXPECT_GE(agglomerative_cluster(sim, 0.5, Linkage::complete).n_clusters,
              agglomerative_cluster(sim, 0.5, Linkage::average).n_clusters);
  }
}

TEST(Analysis, SummaryAndCsvRoundTrip) {
  auto s = summarize({{"a", 3, 8}, {"b", 5, 8}, {"c", 4, 7}, {"d", 5, 8}});
  EXPECT_DOUBLE_EQ(s.mean, 17.0 / 4.0);
  EXPECT_DOUBLE_EQ(s.median, 4.5);
  EXPECT_EQ(s.histogram.at(5), 2u);
  const auto p = (std::filesystem::temp_directory_path() / "fastlane_red.csv").string();
  write_redundancy_csv(p, s);
  auto back = read_redundancy_csv(p);
  ASSERT_EQ(back.rows.size(), 4u);
  EXPECT_EQ(back.rows[2].owner_id, "c");
  EXPECT_EQ(back.rows[2].views, 7u);
  EXPECT_EQ(back.median, s.median);
}

TEST(Analysis, ReportOverMatrices) {
  Rng rng(7);
  std::vector<ViewMatrix> ms;
  for (int i = 0; i < 9; ++i) ms.push_back(planted(4 + i % 3, 3, 16, 0.02, rng, "m" + std::to_string(i)));
  auto r = redundancy_report(ms);
  EXPECT_EQ(r.rows.size(), 9u);
  EXPECT_EQ(r.median, 5.0);
  EXPECT_EQ(linkage_from_string("complete"), Linkage::complete);
  EXPECT_THROW(linkage_from_string("single"), ConfigError);
}
