#include <gtest/gtest.h>

#include <cmath>

#include "fastlane/errors.hpp"
#include "fastlane/scoring.hpp"
#include "gradcheck.hpp"

using namespace fastlane;

namespace {

ViewMatrix vm(std::size_t n, std::size_t d, std::vector<double> data, std::vector<std::uint8_t> valid = {}) {
  return ViewMatrix::from_rows("m", Tensor({n, d}, std::move(data)), std::move(valid));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Scoring, HandExample) {
  // q views (1,0), (0,1); d views (0.5,0.5), (2,-1)
  auto q = vm(2, 2, {1, 0, 0, 1});
  auto d = vm(2, 2, {0.5, 0.5, 2, -1});
  EXPECT_DOUBLE_EQ(score_single_view(q, d).value, 0.5);
  EXPECT_DOUBLE_EQ(score_sum_max(q, d).value, 2.0 + 0.5);
  EXPECT_DOUBLE_EQ(score_max_max(q, d).value, 2.0);
  RoutingOutput r;
  r.selected = 1;
  auto s = score_routed(q, d, r);
  EXPECT_DOUBLE_EQ(s.value, 0.5);
  EXPECT_EQ(s.selected_view, 1u);
}

TEST(Scoring, PaddingIsIgnored) {
  auto q = vm(3, 2, {1, 0, 0, 1, 9, 9}, {1, 1, 0});
  auto d = vm(2, 2, {0.5, 0.5, 50, 50}, {1, 0});
  EXPECT_DOUBLE_EQ(score_sum_max(q, d).value, 1.0);
  EXPECT_DOUBLE_EQ(score_max_max(q, d).value, 0.5);
  RoutingOutput r;
  r.selected = 2;
  EXPECT_THROW(score_routed(q, d, r), RoutingError);
}

TEST(Scoring, MeanViewSkipsClsUnlessAlone) {
  auto q = vm(3, 2, {100, 100, 1, 0, 0, 3});
  EXPECT_EQ(mean_view(q), (std::vector<double>{0.5, 1.5}));
  auto only_cls = vm(2, 2, {4, 5, 0, 0}, {1, 0});
  EXPECT_EQ(mean_view(only_cls), (std::vector<double>{4, 5}));
  auto d = vm(1, 2, {1, 1});
  EXPECT_DOUBLE_EQ(score_mean_view(q, d).value, 2.0);
}

TEST(Scoring, RoutedEqualsSumMaxForOneValidView) {
  Rng rng(3);
  auto q = ViewMatrix::from_rows("q", gradcheck::random_tensor({3, 4}, rng), {0, 1, 0});
  auto d = ViewMatrix::from_rows("d", gradcheck::random_tensor({5, 4}, rng));
  RoutingOutput r;
  r.selected = 1;
  EXPECT_DOUBLE_EQ(score_routed(q, d, r).value, score_sum_max(q, d).value);
}

TEST(Scoring, Errors) {
  auto q = vm(1, 2, {1, 0});
  auto d = vm(1, 3, {1, 0, 0});
  EXPECT_THROW(score_sum_max(q, d), DimensionError);
  auto empty = vm(1, 2, {0, 0}, {0});
  EXPECT_THROW(score_sum_max(empty, q), ScoringError);
  EXPECT_THROW(scorer_from_string("colbert"), ConfigError);
  EXPECT_EQ(scorer_from_string(to_string(ScorerKind::max_max)), ScorerKind::max_max);
}

TEST(Scoring, BatchFormsMatchPairwise) {
  Rng rng(11);
  std::vector<ViewMatrix> docs;
  for (std::size_t n : {3u, 1u, 4u}) docs.push_back(ViewMatrix::from_rows("d", gradcheck::random_tensor({n, 5}, rng)));
  auto q = ViewMatrix::from_rows("q", gradcheck::random_tensor({4, 5}, rng));
  Tape tape;
  std::vector<Var> dv;
  std::vector<std::vector<std::uint8_t>> valid;
  for (auto& d : docs) {
    dv.push_back(tape.constant(d.rows));
    valid.push_back(d.valid);
  }
  auto batch = stack_documents(dv, valid);
  auto qv = tape.constant(q.rows);
  auto sm = sum_max_scores(qv, batch).value();
  auto mm = max_max_scores(qv, batch).value();
  auto sv = single_vector_scores(ad::slice_rows(qv, 0, 1), batch).value();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_NEAR(sm[i], score_sum_max(q, docs[i]).value, 1e-12);
    EXPECT_NEAR(mm[i], score_max_max(q, docs[i]).value, 1e-12);
    double best = -1e300;
    for (std::size_t j = 0; j < docs[i].views(); ++j) best = std::max(best, dot(q.view(0), docs[i].view(j)));
    EXPECT_NEAR(sv[i], best, 1e-12);
  }
}

TEST(Scoring, SumMaxBatchGradient) {
  Rng rng(2);
  auto err = gradcheck::max_grad_error(
      [](Tape&, const std::vector<Var>& x) {
        DocBatch b{x[1], {0, 2, 5}};
        return ad::sum(sum_max_scores(x[0], b));
      },
      {gradcheck::random_tensor({3, 4}, rng), gradcheck::random_tensor({5, 4}, rng)});
  EXPECT_LT(err, 1e-6);
}
