#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fastlane/checkpoint.hpp"
#include "fastlane/encoder.hpp"
#include "fastlane/errors.hpp"
#include "fastlane/model.hpp"
#include "fastlane/tokenizer.hpp"

using namespace fastlane;
namespace fs = std::filesystem;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.layers = 2;
  c.dims = 16;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab_size = 64;
  c.hash_buckets = 16;
  c.max_query_len = 6;
  c.max_doc_len = 10;
  return c;
}

double row_norm(const ViewMatrix& v, std::size_t r) {
  double s = 0.0;
  for (double x : v.view(r)) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Tokenizer, SplitsLowercases) {
  EXPECT_EQ(Tokenizer::split("  Hello\tWORLD  x "), (std::vector<std::string>{"hello", "world", "x"}));
}

TEST(Tokenizer, FittedWordsThenHashBuckets) {
  Tokenizer t(20, 8);
  std::vector<std::string> texts{"b a a", "c a b"};
  t.fit(texts);
  EXPECT_EQ(t.table_size(), 3u);
  EXPECT_EQ(t.encode("a b c"), (std::vector<TokenId>{2, 3, 4}));
  for (auto id : t.encode("zebra quokka")) {
    EXPECT_GE(id, 12u);
    EXPECT_LT(id, 20u);
  }
  EXPECT_EQ(t.encode("zebra"), t.encode("ZEBRA"));
  auto back = Tokenizer::from_json(t.to_json());
  EXPECT_EQ(back.encode("a b c zebra"), t.encode("a b c zebra"));
}

TEST(Tokenizer, TableCapacityIsRespected) {
  Tokenizer t(6, 2);  // room for 2 fitted words
  std::vector<std::string> texts{"a a a b b c"};
  t.fit(texts);
  EXPECT_EQ(t.table_size(), 2u);
  EXPECT_GE(t.encode("c")[0], 4u);
}

TEST(Encoder, OutputShapeAndUnitRows) {
  ParameterStore store;
  Rng rng(1);
  Encoder enc(small_config(), store, rng);
  std::vector<TokenId> toks{5, 9, 30};
  auto v = enc.encode(toks, Tower::query, "q");
  EXPECT_EQ(v.views(), 4u);
  EXPECT_EQ(v.dims(), 16u);
  for (std::size_t r = 0; r < v.views(); ++r) EXPECT_NEAR(row_norm(v, r), 1.0, 1e-12);
}

TEST(Encoder, NormalisationCanBeDisabled) {
  auto cfg = small_config();
  cfg.normalize_rows = false;
  ParameterStore store;
  Rng rng(1);
  Encoder enc(cfg, store, rng);
  std::vector<TokenId> toks{5, 9, 30};
  auto v = enc.encode(toks, Tower::document);
  bool any_off = false;
  for (std::size_t r = 0; r < v.views(); ++r) any_off |= std::abs(row_norm(v, r) - 1.0) > 1e-6;
  EXPECT_TRUE(any_off);
}

TEST(Encoder, TruncatesPerTower) {
  ParameterStore store;
  Rng rng(1);
  Encoder enc(small_config(), store, rng);
  std::vector<TokenId> toks(20, 7);
  EXPECT_EQ(enc.encode(toks, Tower::query).views(), 7u);
  EXPECT_EQ(enc.encode(toks, Tower::document).views(), 11u);
  EXPECT_EQ(enc.truncations(), 2u);
}

TEST(Encoder, TiedAndUntiedNaming) {
  auto cfg = small_config();
  ParameterStore tied;
  Rng rng(3);
  Encoder a(cfg, tied, rng);
  EXPECT_TRUE(tied.contains("encoder.shared.tok_emb"));
  EXPECT_TRUE(tied.contains("encoder.shared.layer1.ffn.w2"));
  std::vector<TokenId> toks{5, 6};
  EXPECT_EQ(a.encode(toks, Tower::query).rows, a.encode(toks, Tower::document).rows);

  cfg.tied_towers = false;
  ParameterStore split;
  Encoder b(cfg, split, rng);
  EXPECT_TRUE(split.contains("encoder.query.tok_emb"));
  EXPECT_TRUE(split.contains("encoder.document.tok_emb"));
  EXPECT_EQ(split.total_values(), 2 * tied.total_values());
  EXPECT_NE(b.encode(toks, Tower::query).rows, b.encode(toks, Tower::document).rows);
}

TEST(Encoder, OutOfVocabularyTokenThrows) {
  ParameterStore store;
  Rng rng(1);
  Encoder enc(small_config(), store, rng);
  std::vector<TokenId> toks{64};
  EXPECT_THROW(enc.encode(toks, Tower::query), DimensionError);
}

TEST(Encoder, InvalidConfigRejected) {
  auto c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.vocab_size = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Encoder, ConfigJsonRejectsUnknownKeys) {
  nlohmann::json j = small_config();
  EXPECT_EQ(j.get<EncoderConfig>().dims, 16u);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<EncoderConfig>(), ConfigError);
}

TEST(Encoder, BindsToExistingParameters) {
  ParameterStore store;
  Rng rng(2);
  Encoder a(small_config(), store, rng);
  Encoder b(small_config(), store);
  std::vector<TokenId> toks{3, 4, 5};
  EXPECT_EQ(a.encode(toks, Tower::query).rows, b.encode(toks, Tower::query).rows);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  ModelConfig mc;
  mc.encoder = small_config();
  mc.encoder.tied_towers = false;
  Tokenizer tok(64, 16);
  std::vector<std::string> texts{"alpha beta gamma", "beta delta"};
  tok.fit(texts);
  auto m = Model::create(mc, tok, 11);
  const auto path = (fs::temp_directory_path() / "fastlane_model.flck").string();
  m->save(path, {{"note", "x"}});
  auto back = Model::load(path);
  EXPECT_EQ(back->params().size(), m->params().size());
  for (const auto& p : m->params()) EXPECT_EQ(back->params().get(p.name).value, p.value) << p.name;
  auto a = m->encode("alpha gamma", Tower::query);
  auto b = back->encode("alpha gamma", Tower::query);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(m->route(a).selected, back->route(b).selected);
  EXPECT_EQ(load_archive(path).header.at("note"), "x");
}

TEST(Checkpoint, CorruptFileIsFormatError) {
  const auto path = (fs::temp_directory_path() / "fastlane_bad.flck").string();
  std::ofstream(path) << "FLCKgarbage";
  EXPECT_THROW(Model::load(path), FormatError);
}
