#pragma once

// Contrastive end-to-end training of encoder + router.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastlane/data_io.hpp"
#include "fastlane/metrics.hpp"
#include "fastlane/model.hpp"

namespace fastlane {

enum class Negatives { triplet, in_batch };
enum class LossKind { cross_entropy, margin };

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 2000;
  double tau_start = 1.0;
  double tau_end = 0.1;
  double epsilon = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  ScorerKind scorer = ScorerKind::routed;
  Negatives negatives = Negatives::in_batch;
  LossKind loss = LossKind::cross_entropy;
  double margin = 0.2;               // margin loss only
  double score_scale = 1.0;          // scores are multiplied by this before the loss
  std::size_t router_warmup_steps = 0;  // router frozen for the first N steps
  std::size_t eval_every = 0;        // dev evaluation period in steps; 0: only at the end
  std::size_t eval_top_k = 10;
  bool distill_bm25 = false;         // not supported; enabling it is a config error

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Token ids of one training example.
struct EncodedTriplet {
  std::vector<TokenId> query, positive, negative;
};

struct LossOptions {
  ScorerKind scorer = ScorerKind::routed;
  Negatives negatives = Negatives::in_batch;
  LossKind loss = LossKind::cross_entropy;
  double margin = 0.2;
  double score_scale = 1.0;
  double tau = 1.0;
  double epsilon = 0.05;
  // Per-query STE anchors (see SteAnchor); used by gradient checks.
  const std::vector<SteAnchor>* anchors = nullptr;
};

struct BatchLoss {
  Var loss;
  std::vector<RoutingOutput> routes;  // routed scorer only
};

// Mean loss over the batch. For the routed scorer the selection goes through
// the straight-through node, so gradients reach router and encoder.
BatchLoss batch_loss(Tape& tape, const Model& model, const std::vector<EncodedTriplet>& batch,
                     const LossOptions& opts, Rng* rng);

struct DevSet {
  Corpus corpus;
  std::vector<Query> queries;
  Qrels qrels;
};

// Flat-index MRR@k of the model on a dev set with the given scorer.
double dev_mrr(const Model& model, const DevSet& dev, ScorerKind scorer, std::size_t k = 10);

struct TrainResult {
  std::vector<double> losses;  // one per step
  std::optional<double> best_dev_mrr;
  std::size_t best_step = 0;
  std::size_t epochs = 0;
};

// Runs cfg.total_steps steps, cycling the data. Writes one JSON line per
// step to `log` when given. With a dev set the model ends holding the
// parameters of the best dev evaluation.
TrainResult train(Model& model, const std::vector<Triplet>& triplets, const TrainConfig& cfg,
                  const DevSet* dev = nullptr, std::ostream* log = nullptr);

}  // namespace fastlane
