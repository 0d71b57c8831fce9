#pragma once

// Run configuration shared by training, adaptation and evaluation. The JSON
// form carries "schema_version": 1; unknown keys are rejected at every level
// and omitted keys take the defaults below.
//
// {
//   "schema_version": 1,
//   "representation": "angle",        // raw | angle | raw_angle
//   "normalize": true,                // wrist-centring + scale for the raw block
//   "encoder": {"hidden_dim": 256, "num_hidden": 2, "embed_dim": 128,
//               "dropout": 0.3, "init_seed": 42},
//   "train": {"n_way": 5, "k_shot": 5, "q_query": 15, "seed": 42,
//             "episodes_per_epoch": 100, "max_epochs": 100, "patience": 15,
//             "monitor_episodes": 50, "supcon_weight": 0.5, "temperature": 0.07,
//             "learning_rate": 1e-4, "weight_decay": 1e-4, "clip_norm": 1.0,
//             "adapt_epochs": 20},
//   "eval": {"n_way": 5, "k_shot": 5, "q_query": 15, "episodes": 600, "seed": 42}
// }

#include <cstdint>
#include <json.hpp>
#include <string>

#include "geomshot/features.hpp"
#include "geomshot/nnet.hpp"
#include "geomshot/optim.hpp"

namespace geomshot {

inline constexpr int kConfigSchemaVersion = 1;

struct EpisodeShape {
  int n_way = 5;
  int k_shot = 5;
  int q_query = 15;

  bool operator==(const EpisodeShape&) const = default;
};

struct TrainConfig {
  EpisodeShape episode;
  std::uint64_t seed = 42;
  int episodes_per_epoch = 100;
  int max_epochs = 100;
  int patience = 15;
  int monitor_episodes = 50;
  double supcon_weight = 0.5;
  double temperature = 0.07;
  nnet::OptimizerConfig optimizer;
  int adapt_epochs = 20;
};

struct EvalConfig {
  EpisodeShape episode;
  int episodes = 600;
  std::uint64_t seed = 42;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  FeatureOptions features;
  nnet::EncoderConfig encoder;  // input_dim follows features.kind
  std::uint64_t init_seed = 42;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

RunConfig default_config();
// Throws Config on malformed JSON, unknown keys, wrong types or invalid values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(const std::string& text);
nlohmann::ordered_json config_to_json(const RunConfig& config);

}  // namespace geomshot
