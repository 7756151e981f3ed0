#pragma once

// Encoder + router + tokenizer bundle, the unit that is trained, saved and
// used for search.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastlane/encoder.hpp"
#include "fastlane/router.hpp"
#include "fastlane/scoring.hpp"
#include "fastlane/tokenizer.hpp"

namespace fastlane {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t router_key_dims = 0;  // 0: same as encoder.dims
  double tau = 0.1;                 // routing temperature at inference
  double epsilon = 0.05;
  ScorerKind scorer = ScorerKind::routed;

  std::size_t key_dims() const noexcept { return router_key_dims ? router_key_dims : encoder.dims; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

class Model {
 public:
  // Fresh parameters drawn from `seed`.
  static std::unique_ptr<Model> create(const ModelConfig& cfg, Tokenizer tokenizer, std::uint64_t seed);
  static std::unique_ptr<Model> load(const std::string& path);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  const Tokenizer& tokenizer() const noexcept { return tok_; }
  const Encoder& encoder() const noexcept { return *encoder_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }

  RouterVars router_vars(Tape& tape) const;
  RouterParams router_params() const;
  // Router parameters by name, in a fixed order.
  std::vector<Parameter*> router_parameters();

  ViewMatrix encode(const std::string& text, Tower tower, std::string owner_id = {}) const;
  // Deterministic routing (no noise) at the inference temperature.
  RoutingOutput route(const ViewMatrix& q, std::vector<std::uint8_t> mask = {}) const;

 private:
  Model(ModelConfig cfg, Tokenizer tok) : cfg_(std::move(cfg)), tok_(std::move(tok)) {}
  void bind_router();

  ModelConfig cfg_;
  Tokenizer tok_;
  ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  Parameter *wq_ = nullptr, *wk_ = nullptr, *dense_w_ = nullptr, *dense_b_ = nullptr;
};

}  // namespace fastlane
