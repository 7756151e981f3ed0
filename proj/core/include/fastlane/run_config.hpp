#pragma once

// Merged run configuration. Precedence, lowest first: built-in defaults,
// environment (FASTLANE_<SECTION>_<KEY>), config file, command-line flags.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastlane/analysis.hpp"
#include "fastlane/index.hpp"
#include "fastlane/model.hpp"
#include "fastlane/synth.hpp"
#include "fastlane/trainer.hpp"

namespace fastlane {

struct IndexConfig {
  IndexKind kind = IndexKind::ivf;
  std::size_t k = 64;
  std::size_t max_iterations = 50;
  double tolerance = 1e-6;
};

struct SearchConfig {
  std::size_t top_k = 10;
  std::size_t nprobe = 8;
};

struct AnalysisConfig {
  double threshold = 0.95;
  Linkage linkage = Linkage::average;
};

struct BenchConfig {
  std::size_t reps = 5;
};

// One seed drives every stochastic stage (model init, training, k-means,
// synthetic data).
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  IndexConfig index;
  SearchConfig search;
  SynthConfig synth;
  AnalysisConfig analysis;
  BenchConfig bench;

  void validate() const;
  // Copies with the run seed (and train.scorer for the model) applied.
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  KMeansOptions kmeans_options() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// `overrides` are dotted `key=value` pairs (e.g. "train.lr=1e-3"); values are
// parsed as JSON unless the default is a string. Unknown keys anywhere are a
// ConfigError.
RunConfig resolve_config(const std::optional<std::string>& file, const std::vector<std::string>& overrides,
                         const EnvLookup& env);

}  // namespace fastlane
