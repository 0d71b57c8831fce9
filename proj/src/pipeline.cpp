#include "geomshot/pipeline.hpp"

#include <json.hpp>
#include <sstream>

#include "geomshot/error.hpp"
#include "geomshot/fewshot.hpp"
#include "geomshot/optim.hpp"

namespace geomshot::pipeline {

using nnet::Checkpoint;
using nnet::Encoder;
using nnet::Matrix;

namespace {

Matrix gather(const Matrix& rows, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  Matrix out(static_cast<Eigen::Index>(a.size() + b.size()), rows.cols());
  Eigen::Index r = 0;
  for (std::size_t i : a) out.row(r++) = rows.row(static_cast<Eigen::Index>(i));
  for (std::size_t i : b) out.row(r++) = rows.row(static_cast<Eigen::Index>(i));
  return out;
}

std::vector<ClassPool> require_pool(const FeatureTable& table, const EpisodeShape& shape) {
  auto pool = build_pool(table, shape.k_shot, shape.q_query);
  if (pool.size() < static_cast<std::size_t>(shape.n_way))
    throw Error(ErrorCode::InsufficientClasses,
                "'" + table.dataset + "' has " + std::to_string(pool.size()) +
                    " classes with >= " + std::to_string(shape.k_shot + shape.q_query) +
                    " samples, need " + std::to_string(shape.n_way));
  return pool;
}

struct MonitorSet {
  std::vector<Episode> episodes;
  std::vector<std::size_t> rows;  // union of rows used, sorted
};

MonitorSet make_monitor_set(const std::vector<ClassPool>& pool, const TrainConfig& cfg) {
  MonitorSet set;
  std::vector<char> used;
  for (int i = 0; i < cfg.monitor_episodes; ++i) {
    EpisodeSpec spec{cfg.episode.n_way, cfg.episode.k_shot, cfg.episode.q_query,
                     cfg.seed + kMonitorSeedOffset, static_cast<std::uint64_t>(i)};
    set.episodes.push_back(sample_episode(pool, spec));
    for (const auto* side : {&set.episodes.back().support, &set.episodes.back().query})
      for (std::size_t r : *side) {
        if (r >= used.size()) used.resize(r + 1, 0);
        used[r] = 1;
      }
  }
  for (std::size_t r = 0; r < used.size(); ++r)
    if (used[r]) set.rows.push_back(r);
  return set;
}

double monitor_accuracy(const Encoder& encoder, const FeatureTable& table, const MonitorSet& set) {
  Matrix input(static_cast<Eigen::Index>(set.rows.size()), table.rows.cols());
  std::vector<Eigen::Index> slot(table.size(), -1);
  for (std::size_t i = 0; i < set.rows.size(); ++i) {
    input.row(static_cast<Eigen::Index>(i)) = table.rows.row(static_cast<Eigen::Index>(set.rows[i]));
    slot[set.rows[i]] = static_cast<Eigen::Index>(i);
  }
  const Matrix embedded = encoder.forward_eval(input);
  Matrix full = Matrix::Zero(static_cast<Eigen::Index>(table.size()), embedded.cols());
  for (std::size_t i = 0; i < set.rows.size(); ++i)
    full.row(static_cast<Eigen::Index>(set.rows[i])) = embedded.row(static_cast<Eigen::Index>(i));
  double total = 0.0;
  for (const auto& ep : set.episodes) total += episode_accuracy(full, ep);
  return total / static_cast<double>(set.episodes.size());
}

std::map<std::string, std::string> base_metadata(const FeatureTable& table) {
  return {{"representation", std::string(to_string(table.options.kind))},
          {"normalize", table.options.normalize ? "true" : "false"},
          {"input_dim", std::to_string(table.dim())},
          {"source", table.dataset}};
}

TrainResult run_episodic(Encoder encoder, const FeatureTable& data, const RunConfig& config,
                         int max_epochs, bool head_only, std::map<std::string, std::string> metadata) {
  const TrainConfig& tc = config.train;
  const auto pool = require_pool(data, tc.episode);
  const MonitorSet monitor = make_monitor_set(pool, tc);

  nnet::AdamW optimizer(tc.optimizer);
  TrainResult result;
  result.best_monitor_acc = -1.0;
  result.checkpoint = nnet::make_checkpoint(encoder, metadata);
  int since_best = 0;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    const double lr = nnet::cosine_lr(tc.optimizer.learning_rate, epoch, max_epochs);
    optimizer.set_learning_rate(lr);
    double loss_sum = 0.0;
    for (int e = 0; e < tc.episodes_per_epoch; ++e) {
      const auto index = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(tc.episodes_per_epoch) +
                         static_cast<std::uint64_t>(e);
      const EpisodeSpec spec{tc.episode.n_way, tc.episode.k_shot, tc.episode.q_query, tc.seed, index};
      const Episode ep = sample_episode(pool, spec);
      const Matrix batch = gather(data.rows, ep.support, ep.query);

      nnet::ForwardCache cache;
      Matrix embedded;
      if (head_only) {
        embedded = encoder.forward_eval(batch, &cache);
      } else {
        Rng dropout_rng(mix_seed(tc.seed, index));
        embedded = encoder.forward_train(batch, dropout_rng, &cache);
      }
      Matrix grad;
      const auto loss = fewshot::episode_loss(embedded, ep.support_labels, ep.query_labels,
                                              tc.episode.n_way, tc.supcon_weight, tc.temperature, &grad);
      loss_sum += loss.total;
      encoder.zero_grad();
      encoder.backward(cache, grad);
      if (head_only) {
        optimizer.step(encoder.head_parameters());
      } else {
        optimizer.step(encoder.trainable_parameters());
      }
    }

    const double acc = monitor_accuracy(encoder, data, monitor);
    result.log.push_back({epoch, lr, loss_sum / tc.episodes_per_epoch, acc});
    if (acc > result.best_monitor_acc) {
      result.best_monitor_acc = acc;
      result.best_epoch = epoch;
      result.checkpoint = nnet::make_checkpoint(encoder, metadata);
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.checkpoint.metadata["best_epoch"] = std::to_string(result.best_epoch);
  return result;
}

}  // namespace

std::string_view to_string(AdaptMode mode) {
  return mode == AdaptMode::Frozen ? "frozen" : "target_supervised";
}

AdaptMode parse_adapt_mode(std::string_view name) {
  if (name == "frozen") return AdaptMode::Frozen;
  if (name == "target_supervised") return AdaptMode::TargetSupervised;
  throw Error(ErrorCode::InvalidArgument, "unknown adapt mode '" + std::string(name) + "'", "mode");
}

double episode_accuracy(const Matrix& embeddings, const Episode& episode) {
  Matrix support(static_cast<Eigen::Index>(episode.support.size()), embeddings.cols());
  for (std::size_t i = 0; i < episode.support.size(); ++i)
    support.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(episode.support[i]));
  Matrix query(static_cast<Eigen::Index>(episode.query.size()), embeddings.cols());
  for (std::size_t i = 0; i < episode.query.size(); ++i)
    query.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(episode.query[i]));
  const auto protos = fewshot::compute_prototypes(support, episode.support_labels,
                                                  static_cast<int>(episode.class_map.size()));
  const auto predicted = fewshot::classify(query, protos);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == episode.query_labels[i];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

TrainResult train_within_domain(const FeatureTable& train, const RunConfig& config) {
  config.validate();
  nnet::EncoderConfig enc = config.encoder;
  enc.input_dim = train.dim();
  auto metadata = base_metadata(train);
  metadata["stage"] = "within_domain";
  return run_episodic(Encoder(enc, config.init_seed), train, config, config.train.max_epochs, false,
                      std::move(metadata));
}

TrainResult pretrain_source(const FeatureTable& source_train, const RunConfig& config,
                            const std::string& source_name) {
  config.validate();
  nnet::EncoderConfig enc = config.encoder;
  enc.input_dim = source_train.dim();
  auto metadata = base_metadata(source_train);
  metadata["source"] = source_name;
  metadata["stage"] = "pretrain";
  return run_episodic(Encoder(enc, config.init_seed), source_train, config, config.train.max_epochs,
                      false, std::move(metadata));
}

void check_compatible(const Checkpoint& checkpoint, const FeatureTable& table) {
  if (checkpoint.encoder.input_dim != table.dim())
    throw Error(ErrorCode::ConfigMismatch,
                "checkpoint expects " + std::to_string(checkpoint.encoder.input_dim) +
                    "-D input, data is " + std::to_string(table.dim()) + "-D");
  auto it = checkpoint.metadata.find("representation");
  if (it != checkpoint.metadata.end() && it->second != to_string(table.options.kind))
    throw Error(ErrorCode::ConfigMismatch, "checkpoint representation '" + it->second +
                                               "' differs from data representation '" +
                                               std::string(to_string(table.options.kind)) + "'");
  it = checkpoint.metadata.find("normalize");
  if (it != checkpoint.metadata.end() && (it->second == "true") != table.options.normalize)
    throw Error(ErrorCode::ConfigMismatch, "checkpoint normalize=" + it->second + " differs from the data");
}

TrainResult adapt(const Checkpoint& checkpoint, const FeatureTable& target_train, AdaptMode mode,
                  const RunConfig& config) {
  check_compatible(checkpoint, target_train);
  if (mode == AdaptMode::Frozen) {
    TrainResult result;
    result.checkpoint = checkpoint;
    return result;
  }
  config.validate();
  auto metadata = checkpoint.metadata;
  metadata["adapted_on"] = target_train.dataset;
  metadata["adapt_mode"] = std::string(to_string(mode));
  metadata["stage"] = "adapt";
  return run_episodic(nnet::encoder_from_checkpoint(checkpoint), target_train, config,
                      config.train.adapt_epochs, true, std::move(metadata));
}

std::string training_log_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["mean_loss"] = e.mean_loss;
    j["monitor_acc"] = e.monitor_acc;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace geomshot::pipeline
