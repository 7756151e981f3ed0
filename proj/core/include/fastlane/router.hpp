#pragma once

// View routing head: self-attention over the query views, a dense layer to
// one logit per view, softmax, masking with an epsilon floor, Gumbel-Softmax
// sampling and a straight-through one-hot selection.

#include <cstdint>
#include <span>
#include <vector>

#include "fastlane/autodiff.hpp"
#include "fastlane/rng.hpp"
#include "fastlane/view_matrix.hpp"

namespace fastlane {

struct RouterParams {
  Tensor wq;       // dims x d_k
  Tensor wk;       // dims x d_k
  Tensor dense_w;  // d_k x 1
  Tensor dense_b;  // [1]

  std::size_t dims() const noexcept { return wq.rows(); }
  std::size_t key_dims() const noexcept { return wq.rank() == 2 ? wq.shape()[1] : 0; }
  void validate() const;

  static RouterParams random(std::size_t dims, std::size_t key_dims, Rng& rng);
};

struct RoutingOutput {
  Tensor attn;                     // views x views, -inf on padding rows/cols
  std::vector<double> logits;      // -inf at padding
  std::vector<double> alpha;       // post-softmax, post-mask
  std::vector<double> alpha_hat;   // tempered (Gumbel-perturbed in train mode)
  std::vector<double> onehot;
  std::size_t selected = 0;
  double tau = 1.0;
};

// A_ij = (v_i Wq) . (v_j Wk) / sqrt(d_k).
Tensor attention_scores(const ViewMatrix& v, const RouterParams& p);
// attended = softmax_rows(A) (V Wk); logit_i = attended_i . w + b.
std::vector<double> view_logits(const ViewMatrix& v, const RouterParams& p);

// g = -log(-log u) with u clamped to [1e-12, 1 - 1e-12].
double gumbel_noise(double u);

struct GumbelSample {
  std::vector<double> alpha_hat;
  std::vector<double> onehot;
  std::size_t selected = 0;
};

// softmax((logits + g) / tau). `rng == nullptr` selects deterministic mode
// (g = 0). Entries equal to -inf never get selected.
GumbelSample gumbel_softmax(std::span<const double> logits, double tau, Rng* rng);

// alpha_i (1 - m_i) + epsilon over valid views, renormalised to sum 1.
// m_i = 1 suppresses view i. Invalid (padding) views come back as 0.
std::vector<double> apply_mask(std::span<const double> alpha, std::span<const std::uint8_t> mask, double epsilon,
                               std::span<const std::uint8_t> valid = {});

// Freezes the straight-through forward value: selection is evaluated as
// onehot + alpha_hat - alpha_hat_stop instead of taking the stop-gradient at
// the current point. Used to check STE gradients against finite differences
// of the surrogate they differentiate.
struct SteAnchor {
  std::vector<double> onehot;          // all views
  std::vector<double> alpha_hat_stop;  // all views
};

struct RouteOptions {
  double tau = 1.0;
  double epsilon = 0.05;
  std::vector<std::uint8_t> mask;  // empty: padding-only masking
  bool train = false;
  const SteAnchor* anchor = nullptr;
};

RoutingOutput route(const ViewMatrix& v, const RouterParams& p, const RouteOptions& opts, Rng* rng);

// --- differentiable form ---------------------------------------------------

struct RouterVars {
  Var wq, wk, dense_w, dense_b;
};

struct RouteGraph {
  std::vector<std::size_t> valid_rows;  // rows of the input that were routed over
  Var logits;     // [n_valid]
  Var alpha;      // [n_valid]
  Var alpha_hat;  // [n_valid]
  Var selection;  // [1 x n_valid]; STE node in train mode, constant one-hot otherwise
  RoutingOutput output;
};

// `views` is the full [views x dims] matrix; `valid` flags padding.
RouteGraph route_graph(Tape& tape, Var views, std::span<const std::uint8_t> valid, const RouterVars& params,
                       const RouteOptions& opts, Rng* rng);

// Forward value is `onehot` exactly; gradient flows to alpha_hat unchanged.
Var straight_through(Var alpha_hat, std::span<const double> onehot);

}  // namespace fastlane
