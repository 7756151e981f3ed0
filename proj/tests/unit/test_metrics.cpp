#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fastlane/errors.hpp"
#include "fastlane/metrics.hpp"

using namespace fastlane;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = FASTLANE_FIXTURE_DIR;

}  // namespace

TEST(Metrics, FixturePerQuery) {
  const auto qrels = read_qrels(kFixtures + "/metrics.qrels");
  const auto run = read_run(kFixtures + "/metrics.run");
  const double l3 = std::log2(3.0);
  EXPECT_EQ(*mrr_at_k(run.at("q1"), qrels, 10), 1.0);
  EXPECT_EQ(*mrr_at_k(run.at("q2"), qrels, 10), 0.5);
  EXPECT_EQ(*mrr_at_k(run.at("q3"), qrels, 10), 0.0);
  EXPECT_EQ(*mrr_at_k(run.at("q4"), qrels, 10), 0.5);
  EXPECT_EQ(*mrr_at_k(run.at("q5"), qrels, 10), 1.0 / 3.0);
  EXPECT_FALSE(mrr_at_k(run.at("q6"), qrels, 10).has_value());
  EXPECT_NEAR(*ndcg_at_k(run.at("q1"), qrels, 10), (3.0 + 0.5) / (3.0 + 1.0 / l3), 1e-12);
  EXPECT_NEAR(*ndcg_at_k(run.at("q2"), qrels, 10), 1.0 / l3, 1e-12);
  EXPECT_EQ(*ndcg_at_k(run.at("q3"), qrels, 10), 0.0);
  EXPECT_NEAR(*ndcg_at_k(run.at("q4"), qrels, 10), (7.0 / l3 + 0.5) / (7.0 + 1.0 / l3), 1e-12);
  EXPECT_NEAR(*ndcg_at_k(run.at("q5"), qrels, 10), 0.5, 1e-12);
}

TEST(Metrics, FixtureMeans) {
  const auto qrels = read_qrels(kFixtures + "/metrics.qrels");
  const auto run = read_run(kFixtures + "/metrics.run");
  auto s = evaluate(run, qrels, parse_metrics("mrr@10,ndcg@10"));
  EXPECT_EQ(s.evaluated, 5u);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_NEAR(s.values.at("mrr@10"), 0.4666666666666667, 1e-15);
  EXPECT_NEAR(s.values.at("ndcg@10"), 0.5478314226182388, 1e-9);
}

TEST(Metrics, CutoffApplies) {
  Qrels q{{"a", {{"x", 1}}}};
  RunList r{"a", {{"y", 3.0}, {"z", 2.0}, {"x", 1.0}}};
  EXPECT_EQ(*mrr_at_k(r, q, 2), 0.0);
  EXPECT_NEAR(*mrr_at_k(r, q, 3), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(*recall_at_k(r, q, 2), 0.0);
  EXPECT_EQ(*recall_at_k(r, q, 3), 1.0);
}

TEST(Metrics, ZeroGradeIsNotRelevant) {
  Qrels q{{"a", {{"x", 0}}}};
  RunList r{"a", {{"x", 1.0}}};
  EXPECT_FALSE(mrr_at_k(r, q, 10).has_value());
}

TEST(Metrics, DuplicateDocInRunIsRejected) {
  RunList r{"a", {{"x", 1.0}, {"x", 0.5}}};
  EXPECT_THROW(r.sort(), FormatError);
}

TEST(Metrics, ParseMetricNames) {
  EXPECT_EQ(parse_metric("ndcg@5").k, 5u);
  EXPECT_EQ(parse_metric("recall@100").name(), "recall@100");
  EXPECT_EQ(parse_metric("mrr").k, 10u);
  EXPECT_THROW(parse_metric("map@10"), ConfigError);
  EXPECT_THROW(parse_metric("mrr@0"), ConfigError);
  EXPECT_THROW(parse_metric("recall"), ConfigError);
}

TEST(Metrics, RunAndQrelsRoundTrip) {
  const auto qrels = read_qrels(kFixtures + "/metrics.qrels");
  const auto run = read_run(kFixtures + "/metrics.run");
  const auto dir = fs::temp_directory_path();
  write_qrels((dir / "fastlane_rt.qrels").string(), qrels);
  write_run((dir / "fastlane_rt.run").string(), run, "rt");
  EXPECT_EQ(read_qrels((dir / "fastlane_rt.qrels").string()), qrels);
  const auto back = read_run((dir / "fastlane_rt.run").string());
  ASSERT_EQ(back.size(), run.size());
  for (const auto& [qid, list] : run) {
    ASSERT_EQ(back.at(qid).ranked.size(), list.ranked.size());
    for (std::size_t i = 0; i < list.ranked.size(); ++i) {
      EXPECT_EQ(back.at(qid).ranked[i].doc_id, list.ranked[i].doc_id);
      EXPECT_EQ(back.at(qid).ranked[i].score, list.ranked[i].score);
    }
  }
}

TEST(Metrics, MalformedFilesAreFormatErrors) {
  const auto p = (fs::temp_directory_path() / "fastlane_bad.qrels").string();
  std::ofstream(p) << "q1 0 d1\n";
  EXPECT_THROW(read_qrels(p), FormatError);
  std::ofstream(p) << "q1 0 d1 -1\n";
  EXPECT_THROW(read_qrels(p), FormatError);
  std::ofstream(p) << "q1 Q0 d1 1\n";
  EXPECT_THROW(read_run(p), FormatError);
}
