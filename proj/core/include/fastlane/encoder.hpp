#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fastlane/autodiff.hpp"
#include "fastlane/rng.hpp"
#include "fastlane/tokenizer.hpp"
#include "fastlane/view_matrix.hpp"

namespace fastlane {

enum class Activation { gelu, tanh };
enum class Tower { query, document };

std::string to_string(Activation a);
std::string to_string(Tower t);

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t dims = 64;    // output width after the projection W_s
  std::size_t hidden = 0;   // transformer width; 0 means "same as dims"
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 1024;
  std::size_t hash_buckets = 128;
  bool tied_towers = true;
  std::size_t max_query_len = 30;
  std::size_t max_doc_len = 200;
  Activation activation = Activation::gelu;
  bool normalize_rows = true;
  bool position_embeddings = true;

  std::size_t width() const noexcept { return hidden == 0 ? dims : hidden; }
  std::size_t max_len(Tower t) const noexcept { return t == Tower::query ? max_query_len : max_doc_len; }
  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Transformer encoder (post-LN, BERT layout) followed by the projection W_s
// applied to every position. With tied towers both towers resolve to the same
// parameter set ("encoder.shared.*"); otherwise "encoder.query.*" and
// "encoder.document.*".
class Encoder {
 public:
  // Registers freshly initialised parameters in `store`.
  Encoder(EncoderConfig cfg, ParameterStore& store, Rng& rng);
  // Binds to parameters already present in `store` (checkpoint load).
  Encoder(EncoderConfig cfg, ParameterStore& store);

  const EncoderConfig& config() const noexcept { return cfg_; }

  // [len + 1 x dims]; row 0 is CLS. Over-long inputs are truncated to the
  // tower limit and counted in truncations().
  Var forward(Tape& tape, std::span<const TokenId> tokens, Tower tower) const;
  ViewMatrix encode(std::span<const TokenId> tokens, Tower tower, std::string owner_id = {}) const;

  std::size_t truncations() const noexcept { return truncations_.load(); }
  static std::string prefix(const EncoderConfig& cfg, Tower tower);

 private:
  struct LayerParams {
    Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Parameter *ln1_g, *ln1_b, *w1, *b1, *w2, *b2, *ln2_g, *ln2_b;
  };
  struct TowerParams {
    Parameter* tok_emb;
    Parameter* pos_emb;  // null when position embeddings are off
    Parameter *emb_ln_g, *emb_ln_b;
    std::vector<LayerParams> layers;
    Parameter* proj;
  };

  void init_tower(const std::string& prefix, ParameterStore& store, Rng& rng);
  TowerParams bind_tower(const std::string& prefix, ParameterStore& store) const;
  const TowerParams& tower(Tower t) const { return cfg_.tied_towers || t == Tower::query ? towers_[0] : towers_[1]; }

  EncoderConfig cfg_;
  std::vector<TowerParams> towers_;
  mutable std::atomic<std::size_t> truncations_{0};
};

}  // namespace fastlane
