#include "fastlane/model.hpp"

#include <algorithm>

#include "fastlane/checkpoint.hpp"
#include "fastlane/errors.hpp"

namespace fastlane {

using nlohmann::json;

void ModelConfig::validate() const {
  encoder.validate();
  if (key_dims() > encoder.dims) throw ConfigError("router.key_dims must not exceed encoder.dims");
  if (!(tau > 0.0)) throw ConfigError("router.tau must be positive");
  if (epsilon < 0.0) throw ConfigError("router.epsilon must be >= 0");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder},
           {"router", {{"key_dims", c.router_key_dims}, {"tau", c.tau}, {"epsilon", c.epsilon}}},
           {"scorer", to_string(c.scorer)}};
}

void from_json(const json& j, ModelConfig& c) {
  for (const auto& [k, v] : j.items())
    if (k != "encoder" && k != "router" && k != "scorer") throw ConfigError("unknown key model." + k);
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  if (j.contains("router")) {
    const auto& r = j.at("router");
    for (const auto& [k, v] : r.items())
      if (k != "key_dims" && k != "tau" && k != "epsilon") throw ConfigError("unknown key router." + k);
    c.router_key_dims = r.value("key_dims", c.router_key_dims);
    c.tau = r.value("tau", c.tau);
    c.epsilon = r.value("epsilon", c.epsilon);
  }
  if (j.contains("scorer")) c.scorer = scorer_from_string(j.at("scorer").get<std::string>());
}

std::unique_ptr<Model> Model::create(const ModelConfig& cfg, Tokenizer tokenizer, std::uint64_t seed) {
  cfg.validate();
  if (tokenizer.vocab_size() != cfg.encoder.vocab_size || tokenizer.hash_buckets() != cfg.encoder.hash_buckets) {
    throw ConfigError("tokenizer vocabulary does not match encoder.vocab_size / encoder.hash_buckets");
  }
  std::unique_ptr<Model> m(new Model(cfg, std::move(tokenizer)));
  Rng rng(seed);
  m->encoder_ = std::make_unique<Encoder>(cfg.encoder, m->store_, rng);
  auto r = RouterParams::random(cfg.encoder.dims, cfg.key_dims(), rng);
  m->store_.add("router.Wq", std::move(r.wq));
  m->store_.add("router.Wk", std::move(r.wk));
  m->store_.add("router.dense.w", std::move(r.dense_w));
  m->store_.add("router.dense.b", std::move(r.dense_b));
  m->bind_router();
  return m;
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  const auto archive = load_archive(path);
  const auto& h = archive.header;
  if (!h.contains("model") || !h.contains("tokenizer")) throw FormatError(path + ": checkpoint header lacks model/tokenizer");
  ModelConfig cfg;
  try {
    cfg = h.at("model").get<ModelConfig>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad model config in checkpoint: " + e.what());
  }
  cfg.validate();
  std::unique_ptr<Model> m(new Model(cfg, Tokenizer::from_json(h.at("tokenizer"))));
  load_into(archive, m->store_);
  m->encoder_ = std::make_unique<Encoder>(cfg.encoder, m->store_);
  m->bind_router();
  return m;
}

void Model::bind_router() {
  auto need = [&](const char* name) {
    auto* p = store_.find(name);
    if (!p) throw FormatError(std::string("missing parameter ") + name);
    return p;
  };
  wq_ = need("router.Wq");
  wk_ = need("router.Wk");
  dense_w_ = need("router.dense.w");
  dense_b_ = need("router.dense.b");
  router_params().validate();
}

void Model::save(const std::string& path, const json& extra) const {
  json header = extra.is_object() ? extra : json::object();
  header["model"] = cfg_;
  header["tokenizer"] = tok_.to_json();
  save_archive(path, header, store_);
}

RouterVars Model::router_vars(Tape& tape) const {
  return {tape.leaf(*wq_), tape.leaf(*wk_), tape.leaf(*dense_w_), tape.leaf(*dense_b_)};
}

RouterParams Model::router_params() const { return {wq_->value, wk_->value, dense_w_->value, dense_b_->value}; }

std::vector<Parameter*> Model::router_parameters() { return {wq_, wk_, dense_w_, dense_b_}; }

ViewMatrix Model::encode(const std::string& text, Tower tower, std::string owner_id) const {
  const auto ids = tok_.encode(text);
  return encoder_->encode(ids, tower, std::move(owner_id));
}

RoutingOutput Model::route(const ViewMatrix& q, std::vector<std::uint8_t> mask) const {
  RouteOptions opts;
  opts.tau = cfg_.tau;
  opts.epsilon = cfg_.epsilon;
  opts.mask = std::move(mask);
  return fastlane::route(q, router_params(), opts, nullptr);
}

}  // namespace fastlane
