#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fastlane/errors.hpp"
#include "fastlane/router.hpp"

using namespace fastlane;

namespace {

ViewMatrix random_views(std::size_t n, std::size_t d, Rng& rng, std::vector<std::uint8_t> valid = {}) {
  Tensor t({n, d});
  for (auto& x : t.data()) x = rng.normal();
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (!valid[i])
      for (auto& x : t.row(i)) x = 0.0;
  return ViewMatrix::from_rows("q", std::move(t), std::move(valid));
}

// Direct loop form of the routing head over the valid rows.
std::vector<double> naive_logits(const ViewMatrix& v, const RouterParams& p) {
  const auto rows = v.valid_indices();
  const std::size_t n = rows.size(), d = v.dims(), dk = p.key_dims();
  std::vector<std::vector<double>> q(n, std::vector<double>(dk, 0.0)), k = q;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t j = 0; j < dk; ++j)
      for (std::size_t i = 0; i < d; ++i) {
        q[a][j] += v.rows.at(rows[a], i) * p.wq.at(i, j);
        k[a][j] += v.rows.at(rows[a], i) * p.wk.at(i, j);
      }
  std::vector<double> out(v.views(), -std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> s(n);
    double mx = -1e300;
    for (std::size_t b = 0; b < n; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dk; ++j) dot += q[a][j] * k[b][j];
      s[b] = dot / std::sqrt(static_cast<double>(dk));
      mx = std::max(mx, s[b]);
    }
    double z = 0.0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    double logit = p.dense_b[0];
    for (std::size_t j = 0; j < dk; ++j) {
      double att = 0.0;
      for (std::size_t b = 0; b < n; ++b) att += s[b] / z * k[b][j];
      logit += att * p.dense_w[j];
    }
    out[rows[a]] = logit;
  }
  return out;
}

}  // namespace

TEST(Router, LogitsMatchLoopOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = RouterParams::random(6, 4, rng);
    auto v = random_views(5, 6, rng, {1, 1, 0, 1, 1});
    const auto got = view_logits(v, p);
    const auto want = naive_logits(v, p);
    for (std::size_t i = 0; i < 5; ++i) {
      if (std::isinf(want[i])) EXPECT_TRUE(std::isinf(got[i]) && got[i] < 0);
      else EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

TEST(Router, AttentionIsNegInfOnPadding) {
  Rng rng(1);
  auto p = RouterParams::random(4, 4, rng);
  auto v = random_views(3, 4, rng, {1, 0, 1});
  auto a = attention_scores(v, p);
  EXPECT_TRUE(std::isinf(a.at(1, 0)));
  EXPECT_TRUE(std::isinf(a.at(0, 1)));
  EXPECT_TRUE(std::isfinite(a.at(2, 0)));
}

TEST(Router, GumbelNoiseClampsEndpoints) {
  EXPECT_TRUE(std::isfinite(gumbel_noise(0.0)));
  EXPECT_TRUE(std::isfinite(gumbel_noise(1.0)));
  EXPECT_NEAR(gumbel_noise(std::exp(-1.0)), 0.0, 1e-15);
}

TEST(Router, DeterministicGumbelSoftmaxIsTemperedSoftmax) {
  std::vector<double> logits{0.5, -1.0, 2.0};
  auto s = gumbel_softmax(logits, 0.5, nullptr);
  double z = 0.0;
  for (double l : logits) z += std::exp(l / 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.alpha_hat[i], std::exp(logits[i] / 0.5) / z, 1e-15);
  EXPECT_EQ(s.selected, 2u);
  EXPECT_EQ(s.onehot, (std::vector<double>{0, 0, 1}));
}

TEST(Router, GumbelSoftmaxNeverPicksNegInf) {
  Rng rng(3);
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> logits{ninf, 0.0, ninf, -5.0};
  for (int i = 0; i < 2000; ++i) {
    auto s = gumbel_softmax(logits, 1.0, &rng);
    EXPECT_TRUE(s.selected == 1 || s.selected == 3);
  }
  std::vector<double> dead{ninf, ninf};
  EXPECT_THROW(gumbel_softmax(dead, 1.0, &rng), RoutingError);
  EXPECT_THROW(gumbel_softmax(logits, 0.0, &rng), ConfigError);
}

TEST(Router, ApplyMaskOracle) {
  std::vector<double> alpha{0.5, 0.3, 0.2};
  std::vector<std::uint8_t> mask{0, 1, 0};
  auto out = apply_mask(alpha, mask, 0.1);
  const double z = 0.6 + 0.1 + 0.3;
  EXPECT_NEAR(out[0], 0.6 / z, 1e-15);
  EXPECT_NEAR(out[1], 0.1 / z, 1e-15);
  EXPECT_NEAR(out[2], 0.3 / z, 1e-15);
  std::vector<std::uint8_t> valid{1, 1, 0};
  auto padded = apply_mask(alpha, mask, 0.1, valid);
  EXPECT_EQ(padded[2], 0.0);
  EXPECT_NEAR(padded[0] + padded[1], 1.0, 1e-15);
}

TEST(Router, EverythingMaskedIsRoutingError) {
  std::vector<double> alpha{0.5, 0.5};
  std::vector<std::uint8_t> mask{1, 1};
  EXPECT_THROW(apply_mask(alpha, mask, 0.05), RoutingError);

  Rng rng(2);
  auto p = RouterParams::random(4, 2, rng);
  auto v = random_views(2, 4, rng);
  RouteOptions o;
  o.mask = mask;
  EXPECT_THROW(route(v, p, o, nullptr), RoutingError);
}

TEST(Router, MaskedViewNeverSelected) {
  Rng rng(8);
  auto p = RouterParams::random(4, 4, rng);
  for (int t = 0; t < 50; ++t) {
    auto v = random_views(4, 4, rng, {1, 1, 1, 0});
    RouteOptions o;
    o.mask = {0, 1, 0, 0};
    o.epsilon = 0.0;
    o.train = true;
    auto r = route(v, p, o, &rng);
    EXPECT_NE(r.selected, 1u);
    EXPECT_NE(r.selected, 3u);
    EXPECT_EQ(r.alpha[3], 0.0);
  }
}

TEST(Router, InferenceRouteIsArgmaxOfLogits) {
  Rng rng(9);
  auto p = RouterParams::random(6, 3, rng);
  for (int t = 0; t < 20; ++t) {
    auto v = random_views(5, 6, rng, {1, 1, 1, 1, 0});
    RouteOptions o;
    o.tau = 0.3;
    auto r = route(v, p, o, nullptr);
    const auto l = naive_logits(v, p);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 5; ++i)
      if (l[i] > l[best]) best = i;
    EXPECT_EQ(r.selected, best);
    double s = 0.0;
    for (double a : r.alpha) s += a;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(r.onehot[r.selected], 1.0);
  }
}

TEST(Router, SameSeedSameSelection) {
  Rng init(4);
  auto p = RouterParams::random(4, 4, init);
  auto v = random_views(6, 4, init);
  RouteOptions o;
  o.train = true;
  Rng a(77), b(77);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(route(v, p, o, &a).selected, route(v, p, o, &b).selected);
}

TEST(Router, StraightThroughForwardIsOneHotBackwardIsIdentity) {
  ParameterStore store;
  auto& p = store.add("a", Tensor::vector({0.2, 0.7, 0.1}));
  Tape tape;
  std::vector<double> onehot{0, 1, 0};
  auto s = straight_through(tape.leaf(p), onehot);
  EXPECT_EQ(s.value(), Tensor::vector(onehot));
  tape.backward(ad::dot(s, tape.constant(Tensor::vector({1.0, 2.0, 3.0}))));
  EXPECT_EQ(p.grad, Tensor::vector({1.0, 2.0, 3.0}));
}

TEST(Router, ParameterValidation) {
  Rng rng(1);
  auto p = RouterParams::random(4, 4, rng);
  EXPECT_NO_THROW(p.validate());
  p.dense_b = Tensor::vector({1.0, 2.0});
  EXPECT_THROW(p.validate(), DimensionError);
  EXPECT_THROW(RouterParams::random(4, 0, rng), ConfigError);
  auto q = RouterParams::random(4, 4, rng);
  auto v = random_views(2, 5, rng);
  EXPECT_THROW(route(v, q, {}, nullptr), DimensionError);
}

TEST(Router, TrainModeWithoutRngIsContractError) {
  Rng rng(1);
  auto p = RouterParams::random(4, 4, rng);
  auto v = random_views(3, 4, rng);
  RouteOptions o;
  o.train = true;
  EXPECT_THROW(route(v, p, o, nullptr), ContractError);
}
