#include "fastlane/encoder.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "fastlane/errors.hpp"

namespace fastlane {

using nlohmann::json;

std::string to_string(Activation a) { return a == Activation::gelu ? "gelu" : "tanh"; }
std::string to_string(Tower t) { return t == Tower::query ? "query" : "document"; }

void EncoderConfig::validate() const {
  if (dims == 0) throw ConfigError("encoder.dims must be positive");
  if (heads == 0 || width() % heads != 0) {
    throw ConfigError("encoder width " + std::to_string(width()) + " must be divisible by heads " + std::to_string(heads));
  }
  if (ffn_mult == 0) throw ConfigError("encoder.ffn_mult must be positive");
  if (vocab_size < hash_buckets + 2) throw ConfigError("encoder.vocab_size must exceed hash_buckets + 2");
  if (max_query_len == 0 || max_doc_len == 0) throw ConfigError("encoder max lengths must be positive");
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"layers", c.layers},
           {"dims", c.dims},
           {"hidden", c.hidden},
           {"heads", c.heads},
           {"ffn_mult", c.ffn_mult},
           {"vocab_size", c.vocab_size},
           {"hash_buckets", c.hash_buckets},
           {"tied_towers", c.tied_towers},
           {"max_query_len", c.max_query_len},
           {"max_doc_len", c.max_doc_len},
           {"activation", to_string(c.activation)},
           {"normalize_rows", c.normalize_rows},
           {"position_embeddings", c.position_embeddings}};
}

void from_json(const json& j, EncoderConfig& c) {
  static const std::vector<std::string> known = {"layers",     "dims",          "hidden",        "heads",
                                                 "ffn_mult",   "vocab_size",    "hash_buckets",  "tied_towers",
                                                 "max_query_len", "max_doc_len", "activation",  "normalize_rows",
                                                 "position_embeddings"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown key encoder." + k);
  }
  c.layers = j.value("layers", c.layers);
  c.dims = j.value("dims", c.dims);
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.hash_buckets = j.value("hash_buckets", c.hash_buckets);
  c.tied_towers = j.value("tied_towers", c.tied_towers);
  c.max_query_len = j.value("max_query_len", c.max_query_len);
  c.max_doc_len = j.value("max_doc_len", c.max_doc_len);
  if (j.contains("activation")) {
    const auto a = j["activation"].get<std::string>();
    if (a == "gelu") c.activation = Activation::gelu;
    else if (a == "tanh") c.activation = Activation::tanh;
    else throw ConfigError("encoder.activation must be gelu or tanh, got " + a);
  }
  c.normalize_rows = j.value("normalize_rows", c.normalize_rows);
  c.position_embeddings = j.value("position_embeddings", c.position_embeddings);
}

std::string Encoder::prefix(const EncoderConfig& cfg, Tower tower) {
  if (cfg.tied_towers) return "encoder.shared.";
  return "encoder." + to_string(tower) + ".";
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

Encoder::Encoder(EncoderConfig cfg, ParameterStore& store, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  init_tower(prefix(cfg_, Tower::query), store, rng);
  if (!cfg_.tied_towers) init_tower(prefix(cfg_, Tower::document), store, rng);
  towers_.push_back(bind_tower(prefix(cfg_, Tower::query), store));
  if (!cfg_.tied_towers) towers_.push_back(bind_tower(prefix(cfg_, Tower::document), store));
}

Encoder::Encoder(EncoderConfig cfg, ParameterStore& store) : cfg_(std::move(cfg)) {
  cfg_.validate();
  towers_.push_back(bind_tower(prefix(cfg_, Tower::query), store));
  if (!cfg_.tied_towers) towers_.push_back(bind_tower(prefix(cfg_, Tower::document), store));
}

void Encoder::init_tower(const std::string& p, ParameterStore& store, Rng& rng) {
  const std::size_t w = cfg_.width();
  const std::size_t f = w * cfg_.ffn_mult;
  const double s = 0.02;
  store.add(p + "tok_emb", normal_tensor({cfg_.vocab_size, w}, s, rng));
  if (cfg_.position_embeddings) {
    store.add(p + "pos_emb", normal_tensor({std::max(cfg_.max_query_len, cfg_.max_doc_len) + 1, w}, s, rng));
  }
  store.add(p + "emb_ln.g", Tensor({w}, 1.0));
  store.add(p + "emb_ln.b", Tensor({w}, 0.0));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string lp = p + "layer" + std::to_string(l) + ".";
    for (const char* name : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      store.add(lp + name, normal_tensor({w, w}, s, rng));
    }
    for (const char* name : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) store.add(lp + name, Tensor({w}, 0.0));
    store.add(lp + "ln1.g", Tensor({w}, 1.0));
    store.add(lp + "ln1.b", Tensor({w}, 0.0));
    store.add(lp + "ffn.w1", normal_tensor({w, f}, s, rng));
    store.add(lp + "ffn.b1", Tensor({f}, 0.0));
    store.add(lp + "ffn.w2", normal_tensor({f, w}, s, rng));
    store.add(lp + "ffn.b2", Tensor({w}, 0.0));
    store.add(lp + "ln2.g", Tensor({w}, 1.0));
    store.add(lp + "ln2.b", Tensor({w}, 0.0));
  }
  store.add(p + "proj", normal_tensor({w, cfg_.dims}, 1.0 / std::sqrt(static_cast<double>(w)), rng));
}

Encoder::TowerParams Encoder::bind_tower(const std::string& p, ParameterStore& store) const {
  const std::size_t w = cfg_.width();
  auto get = [&](const std::string& name, const Shape& shape) {
    Parameter& param = store.get(name);
    if (param.value.shape() != shape) {
      throw DimensionError("parameter " + name + " has shape " + shape_to_string(param.value.shape()) + ", expected " +
                           shape_to_string(shape));
    }
    return &param;
  };
  TowerParams t{};
  t.tok_emb = get(p + "tok_emb", {cfg_.vocab_size, w});
  t.pos_emb = cfg_.position_embeddings ? get(p + "pos_emb", {std::max(cfg_.max_query_len, cfg_.max_doc_len) + 1, w}) : nullptr;
  t.emb_ln_g = get(p + "emb_ln.g", {w});
  t.emb_ln_b = get(p + "emb_ln.b", {w});
  const std::size_t f = w * cfg_.ffn_mult;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string lp = p + "layer" + std::to_string(l) + ".";
    LayerParams L{};
    L.wq = get(lp + "attn.wq", {w, w});
    L.bq = get(lp + "attn.bq", {w});
    L.wk = get(lp + "attn.wk", {w, w});
    L.bk = get(lp + "attn.bk", {w});
    L.wv = get(lp + "attn.wv", {w, w});
    L.bv = get(lp + "attn.bv", {w});
    L.wo = get(lp + "attn.wo", {w, w});
    L.bo = get(lp + "attn.bo", {w});
    L.ln1_g = get(lp + "ln1.g", {w});
    L.ln1_b = get(lp + "ln1.b", {w});
    L.w1 = get(lp + "ffn.w1", {w, f});
    L.b1 = get(lp + "ffn.b1", {f});
    L.w2 = get(lp + "ffn.w2", {f, w});
    L.b2 = get(lp + "ffn.b2", {w});
    L.ln2_g = get(lp + "ln2.g", {w});
    L.ln2_b = get(lp + "ln2.b", {w});
    t.layers.push_back(L);
  }
  t.proj = get(p + "proj", {w, cfg_.dims});
  return t;
}

Var Encoder::forward(Tape& tape, std::span<const TokenId> tokens, Tower which) const {
  const auto& tp = tower(which);
  const std::size_t limit = cfg_.max_len(which);
  if (tokens.size() > limit) {
    tokens = tokens.first(limit);
    ++truncations_;
  }
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(Tokenizer::kCls);
  for (auto t : tokens) {
    if (t >= cfg_.vocab_size) {
      throw DimensionError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(cfg_.vocab_size));
    }
    ids.push_back(t);
  }
  const std::size_t n = ids.size();
  const std::size_t w = cfg_.width();

  Var x = tape.gather(*tp.tok_emb, ids);
  if (tp.pos_emb) {
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = i;
    x = ad::add(x, tape.gather(*tp.pos_emb, pos));
  }
  x = ad::layer_norm(x, tape.leaf(*tp.emb_ln_g), tape.leaf(*tp.emb_ln_b));

  const std::size_t heads = cfg_.heads;
  const std::size_t hd = w / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (const auto& L : tp.layers) {
    Var q = ad::add_row(ad::matmul(x, tape.leaf(*L.wq)), tape.leaf(*L.bq));
    Var k = ad::add_row(ad::matmul(x, tape.leaf(*L.wk)), tape.leaf(*L.bk));
    Var v = ad::add_row(ad::matmul(x, tape.leaf(*L.wv)), tape.leaf(*L.bv));
    std::vector<Var> ctx;
    ctx.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = ad::slice_cols(q, h * hd, (h + 1) * hd);
      Var kh = ad::slice_cols(k, h * hd, (h + 1) * hd);
      Var vh = ad::slice_cols(v, h * hd, (h + 1) * hd);
      Var att = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
      ctx.push_back(ad::matmul(att, vh));
    }
    Var merged = heads == 1 ? ctx.front() : ad::concat_cols(ctx);
    Var attn_out = ad::add_row(ad::matmul(merged, tape.leaf(*L.wo)), tape.leaf(*L.bo));
    Var h1 = ad::layer_norm(ad::add(x, attn_out), tape.leaf(*L.ln1_g), tape.leaf(*L.ln1_b));
    Var ff = ad::add_row(ad::matmul(h1, tape.leaf(*L.w1)), tape.leaf(*L.b1));
    ff = cfg_.activation == Activation::gelu ? ad::gelu(ff) : ad::tanh(ff);
    ff = ad::add_row(ad::matmul(ff, tape.leaf(*L.w2)), tape.leaf(*L.b2));
    x = ad::layer_norm(ad::add(h1, ff), tape.leaf(*L.ln2_g), tape.leaf(*L.ln2_b));
  }
  Var out = ad::matmul(x, tape.leaf(*tp.proj));
  if (cfg_.normalize_rows) out = ad::l2_normalize_rows(out);
  return out;
}

ViewMatrix Encoder::encode(std::span<const TokenId> tokens, Tower which, std::string owner_id) const {
  Tape tape;
  tape.set_grad_enabled(false);
  Var out = forward(tape, tokens, which);
  return ViewMatrix::from_rows(std::move(owner_id), out.value());
}

}  // namespace fastlane
