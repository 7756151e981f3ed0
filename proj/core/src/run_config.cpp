#include "fastlane/run_config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "fastlane/errors.hpp"

namespace fastlane {

using nlohmann::json;

namespace {

json synth_json(const SynthConfig& s) {
  return json{{"n_docs", s.n_docs},
              {"views_per_doc", s.views_per_doc},
              {"n_intents", s.n_intents},
              {"dims", s.dims},
              {"ambiguity_rate", s.ambiguity_rate},
              {"generic_words", s.generic_words},
              {"distractor_repeats", s.distractor_repeats},
              {"n_train", s.n_train},
              {"n_dev", s.n_dev},
              {"entity_spread", s.entity_spread},
              {"generic_spread", s.generic_spread}};
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() || a.is_number_unsigned()) || !b.is_number_float();
  return a.type() == b.type();
}

// Deep overlay of `patch` onto `base`; every key of `patch` must exist.
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[k];
    if (slot.is_object()) {
      overlay(slot, v, path);
    } else {
      if (!same_kind(slot, v)) throw ConfigError("config key '" + path + "' has the wrong type");
      slot = v;
    }
  }
}

json parse_value(const json& current, const std::string& raw, const std::string& path) {
  if (current.is_string()) return raw;
  try {
    json v = json::parse(raw);
    if (!same_kind(current, v)) throw ConfigError("value for '" + path + "' has the wrong type: " + raw);
    return v;
  } catch (const json::parse_error&) {
    throw ConfigError("cannot parse value for '" + path + "': " + raw);
  }
}

void set_dotted(json& root, const std::string& dotted, const std::string& raw) {
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key '" + dotted + "' is a section, not a value");
  *node = parse_value(*node, raw, dotted);
}

void apply_env(json& node, const std::string& prefix, const EnvLookup& env) {
  for (auto& [k, v] : node.items()) {
    std::string name = prefix + "_";
    for (char ch : k) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (v.is_object()) {
      apply_env(v, name, env);
    } else if (auto val = env(name)) {
      v = parse_value(v, *val, name);
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model_config().validate();
  train_config().validate();
  synth_config().validate();
  if (index.k == 0) throw ConfigError("index.k must be >= 1");
  if (index.max_iterations == 0) throw ConfigError("index.max_iterations must be >= 1");
  if (!(index.tolerance >= 0.0)) throw ConfigError("index.tolerance must be >= 0");
  if (search.top_k == 0) throw ConfigError("search.top_k must be >= 1");
  if (search.nprobe == 0) throw ConfigError("search.nprobe must be >= 1");
  if (!(analysis.threshold > -1.0 && analysis.threshold <= 1.0)) throw ConfigError("analysis.threshold must lie in (-1, 1]");
  if (bench.reps == 0) throw ConfigError("bench.reps must be >= 1");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.scorer = train.scorer;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

KMeansOptions RunConfig::kmeans_options() const {
  return {index.k, seed, index.max_iterations, index.tolerance};
}

json to_json(const RunConfig& c) {
  json model = c.model;
  model.erase("scorer");
  json train = c.train;
  train.erase("seed");
  return json{{"seed", c.seed},
              {"model", model},
              {"train", train},
              {"index",
               {{"kind", to_string(c.index.kind)},
                {"k", c.index.k},
                {"max_iterations", c.index.max_iterations},
                {"tolerance", c.index.tolerance}}},
              {"search", {{"top_k", c.search.top_k}, {"nprobe", c.search.nprobe}}},
              {"synth", synth_json(c.synth)},
              {"analysis", {{"threshold", c.analysis.threshold}, {"linkage", to_string(c.analysis.linkage)}}},
              {"bench", {{"reps", c.bench.reps}}}};
}

RunConfig run_config_from_json(const json& j) {
  json merged = to_json(RunConfig{});
  overlay(merged, j, "");
  RunConfig c;
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.model = merged.at("model").get<ModelConfig>();
    c.train = merged.at("train").get<TrainConfig>();
    const auto& ix = merged.at("index");
    c.index.kind = index_kind_from_string(ix.at("kind").get<std::string>());
    take(ix, "k", c.index.k);
    take(ix, "max_iterations", c.index.max_iterations);
    take(ix, "tolerance", c.index.tolerance);
    const auto& se = merged.at("search");
    take(se, "top_k", c.search.top_k);
    take(se, "nprobe", c.search.nprobe);
    const auto& sy = merged.at("synth");
    take(sy, "n_docs", c.synth.n_docs);
    take(sy, "views_per_doc", c.synth.views_per_doc);
    take(sy, "n_intents", c.synth.n_intents);
    take(sy, "dims", c.synth.dims);
    take(sy, "ambiguity_rate", c.synth.ambiguity_rate);
    take(sy, "generic_words", c.synth.generic_words);
    take(sy, "distractor_repeats", c.synth.distractor_repeats);
    take(sy, "n_train", c.synth.n_train);
    take(sy, "n_dev", c.synth.n_dev);
    take(sy, "entity_spread", c.synth.entity_spread);
    take(sy, "generic_spread", c.synth.generic_spread);
    const auto& an = merged.at("analysis");
    take(an, "threshold", c.analysis.threshold);
    c.analysis.linkage = linkage_from_string(an.at("linkage").get<std::string>());
    take(merged.at("bench"), "reps", c.bench.reps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

RunConfig resolve_config(const std::optional<std::string>& file, const std::vector<std::string>& overrides,
                         const EnvLookup& env) {
  json merged = to_json(RunConfig{});
  if (env) apply_env(merged, "FASTLANE", env);
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + *file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + *file + " is not valid JSON: " + e.what());
    }
    overlay(merged, j, "");
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    set_dotted(merged, o.substr(0, eq), o.substr(eq + 1));
  }
  return run_config_from_json(merged);
}

}  // namespace fastlane
