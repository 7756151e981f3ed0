#include "fastlane/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

struct LogitGraph {
  Var scores;  // [n x n]
  Var logits;  // [n]
};

LogitGraph logits_graph(Var valid_views, const RouterVars& p) {
  const auto& wq = p.wq.value();
  const std::size_t dk = wq.rank() == 2 ? wq.shape()[1] : 0;
  if (dk == 0) throw ConfigError("router: key dimension d_k must be positive");
  const std::size_t n = valid_views.value().shape()[0];
  Var q = ad::matmul(valid_views, p.wq);
  Var k = ad::matmul(valid_views, p.wk);
  Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  Var attended = ad::matmul(ad::softmax(scores), k);
  Var logits = ad::reshape(ad::add_row(ad::matmul(attended, p.dense_w), p.dense_b), {n});
  return {scores, logits};
}

std::vector<std::size_t> valid_rows_of(std::span<const std::uint8_t> valid, std::size_t views) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < views; ++i)
    if (valid.empty() || valid[i]) rows.push_back(i);
  return rows;
}

void check_params_against(const ViewMatrix& v, const RouterParams& p) {
  p.validate();
  if (v.dims() != p.dims()) {
    throw DimensionError("router expects " + std::to_string(p.dims()) + "-dim views, got " + std::to_string(v.dims()));
  }
}

RouterVars constants(Tape& tape, const RouterParams& p) {
  return {tape.constant(p.wq), tape.constant(p.wk), tape.constant(p.dense_w), tape.constant(p.dense_b)};
}

}  // namespace

void RouterParams::validate() const {
  if (wq.rank() != 2 || wk.rank() != 2) throw DimensionError("router: Wq and Wk must be matrices");
  if (key_dims() == 0) throw ConfigError("router: key dimension d_k must be positive");
  if (wk.shape() != wq.shape()) {
    throw DimensionError("router: Wq " + shape_to_string(wq.shape()) + " and Wk " + shape_to_string(wk.shape()) +
                         " differ");
  }
  if (key_dims() > dims()) throw ConfigError("router: d_k must not exceed dims");
  if (dense_w.size() != key_dims() || dense_b.size() != 1) throw DimensionError("router: dense layer shape mismatch");
  if (!wq.all_finite() || !wk.all_finite() || !dense_w.all_finite() || !dense_b.all_finite()) {
    throw ConfigError("router: non-finite parameter");
  }
}

RouterParams RouterParams::random(std::size_t dims, std::size_t key_dims, Rng& rng) {
  if (key_dims == 0) throw ConfigError("router: key dimension d_k must be positive");
  const double s = 1.0 / std::sqrt(static_cast<double>(dims));
  RouterParams p{Tensor({dims, key_dims}), Tensor({dims, key_dims}), Tensor({key_dims, 1}), Tensor({1}, 0.0)};
  for (auto& v : p.wq.data()) v = rng.normal(0.0, s);
  for (auto& v : p.wk.data()) v = rng.normal(0.0, s);
  for (auto& v : p.dense_w.data()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(key_dims)));
  return p;
}

Tensor attention_scores(const ViewMatrix& v, const RouterParams& p) {
  check_params_against(v, p);
  const auto rows = v.valid_indices();
  Tensor out({v.views(), v.views()}, kNegInf);
  if (rows.empty()) return out;
  Tape tape;
  tape.set_grad_enabled(false);
  Var vv = ad::gather_rows(tape.constant(v.rows), rows);
  const auto g = logits_graph(vv, constants(tape, p));
  const auto& s = g.scores.value();
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < rows.size(); ++b) out.at(rows[a], rows[b]) = s.at(a, b);
  return out;
}

std::vector<double> view_logits(const ViewMatrix& v, const RouterParams& p) {
  check_params_against(v, p);
  const auto rows = v.valid_indices();
  std::vector<double> out(v.views(), kNegInf);
  if (rows.empty()) return out;
  Tape tape;
  tape.set_grad_enabled(false);
  Var vv = ad::gather_rows(tape.constant(v.rows), rows);
  const auto& l = logits_graph(vv, constants(tape, p)).logits.value();
  for (std::size_t a = 0; a < rows.size(); ++a) out[rows[a]] = l[a];
  return out;
}

double gumbel_noise(double u) {
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

GumbelSample gumbel_softmax(std::span<const double> logits, double tau, Rng* rng) {
  if (!(tau > 0.0)) throw ConfigError("gumbel_softmax: tau must be positive");
  if (std::none_of(logits.begin(), logits.end(), [](double x) { return std::isfinite(x); })) {
    throw RoutingError("gumbel_softmax: no finite logit");
  }
  const std::size_t n = logits.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng ? gumbel_noise(rng->uniform()) : 0.0;
    z[i] = (logits[i] + g) / tau;
  }
  const double m = *std::max_element(z.begin(), z.end());
  GumbelSample s;
  s.alpha_hat.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (s.alpha_hat[i] = std::exp(z[i] - m));
  for (auto& a : s.alpha_hat) a /= total;
  s.selected = argmax_first(z);
  s.onehot.assign(n, 0.0);
  s.onehot[s.selected] = 1.0;
  return s;
}

std::vector<double> apply_mask(std::span<const double> alpha, std::span<const std::uint8_t> mask, double epsilon,
                               std::span<const std::uint8_t> valid) {
  if (mask.size() != alpha.size() || (!valid.empty() && valid.size() != alpha.size())) {
    throw DimensionError("apply_mask: alpha/mask/valid sizes differ");
  }
  if (epsilon < 0.0) throw ConfigError("apply_mask: epsilon must be >= 0");
  std::vector<double> out(alpha.size(), 0.0);
  bool routable = false;
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    routable = routable || mask[i] == 0;
    out[i] = alpha[i] * (mask[i] ? 0.0 : 1.0) + epsilon;
    total += out[i];
  }
  if (!routable) throw RoutingError("no routable view: every valid view is masked");
  if (!(total > 0.0)) throw RoutingError("no routable view: all unmasked views have zero probability");
  for (auto& v : out) v /= total;
  return out;
}

namespace {

// Dedicated node so the forward value is bit-identical to the one-hot vector.
Var ste_node(Var alpha_hat, std::vector<double> onehot) {
  Tensor value(alpha_hat.value().shape(), std::move(onehot));
  return alpha_hat.tape->record("straight_through", std::move(value), {alpha_hat.id},
                                [ia = alpha_hat.id](Tape& t, std::size_t self) {
                                  if (!t.requires_grad(ia)) return;
                                  const auto& g = t.upstream(self);
                                  auto& buf = t.grad_buffer(ia);
                                  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
                                });
}

}  // namespace

Var straight_through(Var alpha_hat, std::span<const double> onehot) {
  if (onehot.size() != alpha_hat.value().size()) throw DimensionError("straight_through: shape mismatch");
  return ste_node(alpha_hat, std::vector<double>(onehot.begin(), onehot.end()));
}

RouteGraph route_graph(Tape& tape, Var views, std::span<const std::uint8_t> valid, const RouterVars& params,
                       const RouteOptions& opts, Rng* rng) {
  if (!(opts.tau > 0.0)) throw ConfigError("router: tau must be positive");
  if (opts.epsilon < 0.0) throw ConfigError("router: epsilon must be >= 0");
  const auto& vv = views.value();
  if (vv.rank() != 2) throw DimensionError("router: views must be a matrix");
  const std::size_t total_views = vv.shape()[0];
  if (!valid.empty() && valid.size() != total_views) throw DimensionError("router: valid mask size mismatch");
  if (!opts.mask.empty() && opts.mask.size() != total_views) throw DimensionError("router: mask size mismatch");
  if (vv.shape()[1] != params.wq.value().rows()) {
    throw DimensionError("router expects " + std::to_string(params.wq.value().rows()) + "-dim views, got " +
                         std::to_string(vv.shape()[1]));
  }
  if (opts.train && !rng && !opts.anchor) throw ContractError("router: train mode needs a random generator");

  RouteGraph g;
  g.valid_rows = valid_rows_of(valid, total_views);
  const std::size_t n = g.valid_rows.size();
  if (n == 0) throw RoutingError("no routable view: input has no valid views");

  Var sub = n == total_views ? views : ad::gather_rows(views, g.valid_rows);
  const auto lg = logits_graph(sub, params);
  g.logits = lg.logits;
  Var alpha = ad::softmax(lg.logits);

  std::vector<double> keep(n, 1.0);
  bool routable = false;
  for (std::size_t a = 0; a < n; ++a) {
    if (!opts.mask.empty() && opts.mask[g.valid_rows[a]]) keep[a] = 0.0;
    routable = routable || keep[a] != 0.0;
  }
  if (!routable) throw RoutingError("no routable view: every valid view is masked");
  Var masked = ad::add_scalar(ad::mul(alpha, tape.constant(Tensor::vector(keep))), opts.epsilon);
  g.alpha = ad::normalize_sum(masked);

  std::vector<double> noise(n, 0.0);
  if (opts.train && rng) {
    for (auto& x : noise) x = gumbel_noise(rng->uniform());
  }
  Var perturbed = ad::add(ad::log(g.alpha), tape.constant(Tensor::vector(noise)));
  g.alpha_hat = ad::softmax(ad::scale(perturbed, 1.0 / opts.tau));

  const auto& ah = g.alpha_hat.value();
  const std::size_t sel = argmax_first(ah.data());
  std::vector<double> onehot(n, 0.0);
  onehot[sel] = 1.0;

  if (opts.train && opts.anchor) {
    const auto& a = *opts.anchor;
    if (a.onehot.size() != total_views || a.alpha_hat_stop.size() != total_views) {
      throw DimensionError("router: anchor size mismatch");
    }
    std::vector<double> offset(n);
    for (std::size_t k = 0; k < n; ++k) offset[k] = a.onehot[g.valid_rows[k]] - a.alpha_hat_stop[g.valid_rows[k]];
    g.selection = ad::reshape(ad::add(g.alpha_hat, tape.constant(Tensor::vector(offset))), {1, n});
  } else if (opts.train) {
    g.selection = ad::reshape(ste_node(g.alpha_hat, onehot), {1, n});
  } else {
    g.selection = tape.constant(Tensor({1, n}, onehot));
  }

  auto& out = g.output;
  out.tau = opts.tau;
  out.attn = Tensor({total_views, total_views}, kNegInf);
  out.logits.assign(total_views, kNegInf);
  out.alpha.assign(total_views, 0.0);
  out.alpha_hat.assign(total_views, 0.0);
  out.onehot.assign(total_views, 0.0);
  const auto& sc = lg.scores.value();
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t r = g.valid_rows[a];
    for (std::size_t b = 0; b < n; ++b) out.attn.at(r, g.valid_rows[b]) = sc.at(a, b);
    out.logits[r] = g.logits.value()[a];
    out.alpha[r] = g.alpha.value()[a];
    out.alpha_hat[r] = ah[a];
  }
  out.selected = g.valid_rows[sel];
  out.onehot[out.selected] = 1.0;
  return g;
}

RoutingOutput route(const ViewMatrix& v, const RouterParams& p, const RouteOptions& opts, Rng* rng) {
  check_params_against(v, p);
  Tape tape;
  tape.set_grad_enabled(false);
  return route_graph(tape, tape.constant(v.rows), v.valid, constants(tape, p), opts, rng).output;
}

}  // namespace fastlane
