#include "fastlane/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fastlane/errors.hpp"
#include "fastlane/optim.hpp"
#include "fastlane/retrieval.hpp"

namespace fastlane {

using nlohmann::json;

namespace {

std::string to_string(Negatives n) { return n == Negatives::triplet ? "triplet" : "in_batch"; }
std::string to_string(LossKind l) { return l == LossKind::cross_entropy ? "ce" : "margin"; }

Negatives negatives_from(const std::string& s) {
  if (s == "triplet") return Negatives::triplet;
  if (s == "in_batch") return Negatives::in_batch;
  throw ConfigError("train.negatives must be triplet or in_batch, got '" + s + "'");
}

LossKind loss_from(const std::string& s) {
  if (s == "ce") return LossKind::cross_entropy;
  if (s == "margin") return LossKind::margin;
  throw ConfigError("train.loss must be ce or margin, got '" + s + "'");
}

Var query_scores(Tape& tape, Var q, const DocBatch& docs, ScorerKind scorer, const RouterVars* rv,
                 const RouteOptions& ro, Rng* rng, std::vector<RoutingOutput>& routes) {
  const std::size_t n = q.value().shape()[0];
  const std::size_t d = q.value().shape()[1];
  switch (scorer) {
    case ScorerKind::routed: {
      auto g = route_graph(tape, q, {}, *rv, ro, rng);
      routes.push_back(g.output);
      return single_vector_scores(ad::matmul(g.selection, q), docs);
    }
    case ScorerKind::single_view:
      return single_vector_scores(ad::slice_rows(q, 0, 1), docs);
    case ScorerKind::mean_view: {
      Var tokens = n > 1 ? ad::slice_rows(q, 1, n) : q;
      const double k = static_cast<double>(n > 1 ? n - 1 : 1);
      return single_vector_scores(ad::reshape(ad::scale(ad::sum_axis(tokens, 0), 1.0 / k), {1, d}), docs);
    }
    case ScorerKind::sum_max:
      return sum_max_scores(q, docs);
    case ScorerKind::max_max:
      return max_max_scores(q, docs);
  }
  throw ConfigError("unknown scorer");
}

Var margin_loss(Tape& tape, Var scores, std::size_t target, double margin) {
  const std::size_t n = scores.value().size();
  Tensor pick({n, n}, 0.0);
  for (std::size_t j = 0; j < n; ++j) pick.at(target, j) = 1.0;
  Tensor others({1, n}, 1.0 / static_cast<double>(n - 1));
  others[target] = 0.0;
  Var row = ad::reshape(scores, {1, n});
  Var pos = ad::matmul(row, tape.constant(std::move(pick)));
  Var hinge = ad::relu(ad::add_scalar(ad::sub(row, pos), margin));
  return ad::sum(ad::mul(hinge, tape.constant(std::move(others))));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(tau_end > 0.0) || tau_end > tau_start) throw ConfigError("train: need 0 < tau_end <= tau_start");
  if (total_steps < warmup_steps) throw ConfigError("train.total_steps must be >= train.warmup_steps");
  if (epsilon < 0.0) throw ConfigError("train.epsilon must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(score_scale > 0.0)) throw ConfigError("train.score_scale must be > 0");
  if (eval_top_k == 0) throw ConfigError("train.eval_top_k must be >= 1");
  if (negatives == Negatives::in_batch && batch_size < 1) throw ConfigError("in-batch negatives need a batch");
  if (distill_bm25) throw ConfigError("train.distill_bm25: BM25 teacher distillation is not implemented");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"weight_decay", c.weight_decay},
           {"warmup_steps", c.warmup_steps},
           {"total_steps", c.total_steps},
           {"tau_start", c.tau_start},
           {"tau_end", c.tau_end},
           {"epsilon", c.epsilon},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"scorer", to_string(c.scorer)},
           {"negatives", to_string(c.negatives)},
           {"loss", to_string(c.loss)},
           {"margin", c.margin},
           {"score_scale", c.score_scale},
           {"router_warmup_steps", c.router_warmup_steps},
           {"eval_every", c.eval_every},
           {"eval_top_k", c.eval_top_k},
           {"distill_bm25", c.distill_bm25}};
}

void from_json(const json& j, TrainConfig& c) {
  json defaults = c;
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw ConfigError("unknown key train." + k);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.tau_start = j.value("tau_start", c.tau_start);
  c.tau_end = j.value("tau_end", c.tau_end);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("scorer")) c.scorer = scorer_from_string(j.at("scorer").get<std::string>());
  if (j.contains("negatives")) c.negatives = negatives_from(j.at("negatives").get<std::string>());
  if (j.contains("loss")) c.loss = loss_from(j.at("loss").get<std::string>());
  c.margin = j.value("margin", c.margin);
  c.score_scale = j.value("score_scale", c.score_scale);
  c.router_warmup_steps = j.value("router_warmup_steps", c.router_warmup_steps);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_top_k = j.value("eval_top_k", c.eval_top_k);
  c.distill_bm25 = j.value("distill_bm25", c.distill_bm25);
}

BatchLoss batch_loss(Tape& tape, const Model& model, const std::vector<EncodedTriplet>& batch, const LossOptions& opts,
                     Rng* rng) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  if (opts.anchors && opts.anchors->size() != batch.size()) throw DimensionError("batch_loss: one anchor per query");
  const auto& enc = model.encoder();
  const std::size_t b = batch.size();

  std::vector<Var> pos, neg;
  for (const auto& t : batch) pos.push_back(enc.forward(tape, t.positive, Tower::document));
  for (const auto& t : batch) neg.push_back(enc.forward(tape, t.negative, Tower::document));
  auto all_valid = [](Var v) { return std::vector<std::uint8_t>(v.value().shape()[0], 1); };

  std::optional<DocBatch> shared;
  if (opts.negatives == Negatives::in_batch) {
    std::vector<Var> docs(pos);
    docs.insert(docs.end(), neg.begin(), neg.end());
    std::vector<std::vector<std::uint8_t>> valid;
    for (auto v : docs) valid.push_back(all_valid(v));
    shared = stack_documents(docs, valid);
  }

  std::optional<RouterVars> rv;
  if (opts.scorer == ScorerKind::routed) rv = model.router_vars(tape);

  BatchLoss out;
  std::optional<Var> total;
  for (std::size_t i = 0; i < b; ++i) {
    Var q = enc.forward(tape, batch[i].query, Tower::query);
    DocBatch local;
    std::size_t target = i;
    if (!shared) {
      local = stack_documents({pos[i], neg[i]}, {all_valid(pos[i]), all_valid(neg[i])});
      target = 0;
    }
    RouteOptions ro;
    ro.tau = opts.tau;
    ro.epsilon = opts.epsilon;
    ro.train = true;
    ro.anchor = opts.anchors ? &(*opts.anchors)[i] : nullptr;
    Var scores = query_scores(tape, q, shared ? *shared : local, opts.scorer, rv ? &*rv : nullptr, ro, rng, out.routes);
    scores = ad::scale(scores, opts.score_scale);
    Var li = opts.loss == LossKind::cross_entropy ? ad::cross_entropy(scores, target)
                                                   : margin_loss(tape, scores, target, opts.margin);
    total = total ? ad::add(*total, li) : li;
  }
  out.loss = ad::scale(*total, 1.0 / static_cast<double>(b));
  return out;
}

double dev_mrr(const Model& model, const DevSet& dev, ScorerKind scorer, std::size_t k) {
  const auto docs = encode_corpus(model, dev.corpus);
  const auto index = FlatIndex::build(views_from_matrices(docs));
  const auto queries = encode_queries(model, dev.queries);
  const auto run = search_all(&model, index, queries, scorer, k, 1);
  MetricSpec m{MetricSpec::Kind::mrr, k};
  return evaluate(run, dev.qrels, {m}).values.at(m.name());
}

TrainResult train(Model& model, const std::vector<Triplet>& triplets, const TrainConfig& cfg, const DevSet* dev,
                  std::ostream* log) {
  cfg.validate();
  if (triplets.empty()) throw ConfigError("train: no training triplets");
  const auto& tok = model.tokenizer();
  std::vector<EncodedTriplet> data;
  data.reserve(triplets.size());
  for (const auto& t : triplets) data.push_back({tok.encode(t.query), tok.encode(t.positive), tok.encode(t.negative)});

  AdamWConfig ac;
  ac.weight_decay = cfg.weight_decay;
  AdamW opt(model.params(), ac);
  Rng base(cfg.seed);
  Rng order_rng = base.fork(1);
  Rng noise = base.fork(2);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng.engine());
  std::size_t cursor = 0;

  TrainResult result;
  std::vector<Tensor> best;
  auto run_eval = [&](std::size_t step) {
    const double mrr = dev_mrr(model, *dev, cfg.scorer, cfg.eval_top_k);
    if (!result.best_dev_mrr || mrr > *result.best_dev_mrr) {
      result.best_dev_mrr = mrr;
      result.best_step = step;
      best.clear();
      for (const auto& p : model.params()) best.push_back(p.value);
    }
    return mrr;
  };

  auto router = model.router_parameters();
  const std::size_t total = cfg.total_steps;
  for (std::size_t step = 0; step < total; ++step) {
    std::vector<EncodedTriplet> batch;
    batch.reserve(cfg.batch_size);
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
        ++result.epochs;
      }
      batch.push_back(data[order[cursor++]]);
    }
    for (auto* p : router) p->requires_grad = step >= cfg.router_warmup_steps;

    const double frac = total > 1 ? static_cast<double>(step) / static_cast<double>(total - 1) : 0.0;
    LossOptions lo;
    lo.scorer = cfg.scorer;
    lo.negatives = cfg.negatives;
    lo.loss = cfg.loss;
    lo.margin = cfg.margin;
    lo.score_scale = cfg.score_scale;
    lo.tau = cfg.tau_start + (cfg.tau_end - cfg.tau_start) * frac;
    lo.epsilon = cfg.epsilon;

    model.params().zero_grad();
    Tape tape;
    auto bl = batch_loss(tape, model, batch, lo, &noise);
    const double loss = bl.loss.value()[0];
    const double lr = lr_schedule(step + 1, cfg.lr, cfg.warmup_steps, total);
    if (!std::isfinite(loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(result.epochs) +
                          ", lr " + std::to_string(lr) + ", tau " + std::to_string(lo.tau) + ")");
    }
    tape.backward(bl.loss);
    opt.step(lr);
    result.losses.push_back(loss);

    std::optional<double> mrr;
    if (dev && cfg.eval_every && (step + 1) % cfg.eval_every == 0) mrr = run_eval(step + 1);
    if (log) {
      std::map<std::string, std::size_t> hist;
      for (const auto& r : bl.routes) ++hist[std::to_string(r.selected)];
      json line{{"step", step + 1}, {"epoch", result.epochs}, {"loss", loss}, {"lr", lr}, {"tau", lo.tau}};
      line["selected"] = hist;
      if (mrr) line["dev_mrr@" + std::to_string(cfg.eval_top_k)] = *mrr;
      *log << line.dump() << '\n';
    }
  }
  for (auto* p : router) p->requires_grad = true;

  if (dev) {
    if (!(cfg.eval_every && total > 0 && total % cfg.eval_every == 0)) run_eval(total);
    std::size_t i = 0;
    for (auto& p : model.params()) p.value = best[i++];
  }
  return result;
}

}  // namespace fastlane
