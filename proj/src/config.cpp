#include "geomshot/config.hpp"

#include <set>

#include "geomshot/error.hpp"

namespace geomshot {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::Config, where + " must be an object", where);
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + where, key);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Config, std::string("key '") + key + "' has the wrong type", key);
  }
}

void read_shape(const json& obj, EpisodeShape& shape) {
  read(obj, "n_way", shape.n_way);
  read(obj, "k_shot", shape.k_shot);
  read(obj, "q_query", shape.q_query);
}

void check_shape(const EpisodeShape& s, const std::string& where) {
  if (s.n_way < 2 || s.k_shot < 1 || s.q_query < 1)
    throw Error(ErrorCode::Config, where + ": need n_way >= 2, k_shot >= 1, q_query >= 1", where);
}

}  // namespace

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw Error(ErrorCode::Config, "unsupported schema_version " + std::to_string(schema_version),
                "schema_version");
  encoder.validate();
  if (encoder.input_dim != feature_dim(features.kind))
    throw Error(ErrorCode::ConfigMismatch, "encoder input_dim does not match the representation");
  check_shape(train.episode, "train");
  check_shape(eval.episode, "eval");
  if (train.episodes_per_epoch < 1 || train.max_epochs < 1 || train.patience < 1 ||
      train.monitor_episodes < 1 || train.adapt_epochs < 1)
    throw Error(ErrorCode::Config, "train counts must be positive integers", "train");
  if (!(train.temperature > 0.0) || train.supcon_weight < 0.0)
    throw Error(ErrorCode::Config, "temperature must be > 0 and supcon_weight >= 0", "train");
  if (!(train.optimizer.learning_rate > 0.0) || train.optimizer.weight_decay < 0.0)
    throw Error(ErrorCode::Config, "learning_rate must be > 0 and weight_decay >= 0", "train");
  if (eval.episodes < 1) throw Error(ErrorCode::Config, "eval episodes must be positive", "eval");
}

RunConfig default_config() {
  RunConfig c;
  c.encoder.input_dim = feature_dim(c.features.kind);
  return c;
}

RunConfig config_from_json(const json& j) {
  RunConfig c = default_config();
  reject_unknown(j, {"schema_version", "representation", "normalize", "encoder", "train", "eval"},
                 "config");
  if (!j.contains("schema_version"))
    throw Error(ErrorCode::Config, "missing schema_version", "schema_version");
  read(j, "schema_version", c.schema_version);
  if (j.contains("representation")) {
    std::string name;
    read(j, "representation", name);
    try {
      c.features.kind = parse_feature_kind(name);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, e.what(), "representation");
    }
  }
  read(j, "normalize", c.features.normalize);

  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown(e, {"hidden_dim", "num_hidden", "embed_dim", "dropout", "init_seed"}, "encoder");
    read(e, "hidden_dim", c.encoder.hidden_dim);
    read(e, "num_hidden", c.encoder.num_hidden);
    read(e, "embed_dim", c.encoder.embed_dim);
    read(e, "dropout", c.encoder.dropout);
    read(e, "init_seed", c.init_seed);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t,
                   {"n_way", "k_shot", "q_query", "seed", "episodes_per_epoch", "max_epochs",
                    "patience", "monitor_episodes", "supcon_weight", "temperature",
                    "learning_rate", "weight_decay", "clip_norm", "adapt_epochs"},
                   "train");
    read_shape(t, c.train.episode);
    read(t, "seed", c.train.seed);
    read(t, "episodes_per_epoch", c.train.episodes_per_epoch);
    read(t, "max_epochs", c.train.max_epochs);
    read(t, "patience", c.train.patience);
    read(t, "monitor_episodes", c.train.monitor_episodes);
    read(t, "supcon_weight", c.train.supcon_weight);
    read(t, "temperature", c.train.temperature);
    read(t, "learning_rate", c.train.optimizer.learning_rate);
    read(t, "weight_decay", c.train.optimizer.weight_decay);
    read(t, "clip_norm", c.train.optimizer.clip_norm);
    read(t, "adapt_epochs", c.train.adapt_epochs);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, {"n_way", "k_shot", "q_query", "episodes", "seed"}, "eval");
    read_shape(e, c.eval.episode);
    read(e, "episodes", c.eval.episodes);
    read(e, "seed", c.eval.seed);
  }
  c.encoder.input_dim = feature_dim(c.features.kind);
  c.validate();
  return c;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("invalid JSON: ") + e.what(), "json");
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["representation"] = std::string(to_string(c.features.kind));
  j["normalize"] = c.features.normalize;
  j["encoder"] = {{"hidden_dim", c.encoder.hidden_dim},
                  {"num_hidden", c.encoder.num_hidden},
                  {"embed_dim", c.encoder.embed_dim},
                  {"dropout", c.encoder.dropout},
                  {"init_seed", c.init_seed}};
  j["train"] = {{"n_way", c.train.episode.n_way},
                {"k_shot", c.train.episode.k_shot},
                {"q_query", c.train.episode.q_query},
                {"seed", c.train.seed},
                {"episodes_per_epoch", c.train.episodes_per_epoch},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"monitor_episodes", c.train.monitor_episodes},
                {"supcon_weight", c.train.supcon_weight},
                {"temperature", c.train.temperature},
                {"learning_rate", c.train.optimizer.learning_rate},
                {"weight_decay", c.train.optimizer.weight_decay},
                {"clip_norm", c.train.optimizer.clip_norm},
                {"adapt_epochs", c.train.adapt_epochs}};
  j["eval"] = {{"n_way", c.eval.episode.n_way},
               {"k_shot", c.eval.episode.k_shot},
               {"q_query", c.eval.episode.q_query},
               {"episodes", c.eval.episodes},
               {"seed", c.eval.seed}};
  return j;
}

}  // namespace geomshot
