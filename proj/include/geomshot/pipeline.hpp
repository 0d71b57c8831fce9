#pragma once

// Episodic training loops: within-domain training, source pretraining and
// cross-domain adaptation of a pretrained checkpoint.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "geomshot/checkpoint.hpp"
#include "geomshot/config.hpp"
#include "geomshot/episodes.hpp"
#include "geomshot/features.hpp"

namespace geomshot::pipeline {

// Monitor episodes use base seed train.seed + kMonitorSeedOffset so their
// stream never meets the training episodes' seed + index stream.
inline constexpr std::uint64_t kMonitorSeedOffset = std::uint64_t{1} << 32;

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double monitor_acc = 0.0;
};

struct TrainResult {
  nnet::Checkpoint checkpoint;  // parameters of the best monitored epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_monitor_acc = 0.0;
  bool early_stopped = false;
};

enum class AdaptMode { Frozen, TargetSupervised };

std::string_view to_string(AdaptMode mode);
AdaptMode parse_adapt_mode(std::string_view name);

// Per epoch: cosine learning rate, episodes_per_epoch episodes from `train`
// (episode index = epoch * episodes_per_epoch + e), one AdamW step per
// episode on NLL + supcon_weight * SupCon, then accuracy on
// monitor_episodes held-out episodes. Stops after `patience` epochs without
// a strict improvement.
TrainResult train_within_domain(const FeatureTable& train, const RunConfig& config);

// Same loop; the checkpoint is tagged with the source dataset.
TrainResult pretrain_source(const FeatureTable& source_train, const RunConfig& config,
                            const std::string& source_name);

// Frozen returns the checkpoint unchanged. TargetSupervised trains only the
// final projection for up to train.adapt_epochs epochs with the backbone in
// eval mode (batch-norm statistics frozen, dropout off).
TrainResult adapt(const nnet::Checkpoint& checkpoint, const FeatureTable& target_train,
                  AdaptMode mode, const RunConfig& config);

// Throws ConfigMismatch when the checkpoint's input width or representation
// differs from the table's.
void check_compatible(const nnet::Checkpoint& checkpoint, const FeatureTable& table);

// Fraction of the episode's queries whose nearest prototype is their class;
// `embeddings` is indexed by the episode's row ids.
double episode_accuracy(const Eigen::MatrixXd& embeddings, const Episode& episode);

std::string training_log_jsonl(const std::vector<EpochLog>& log);

}  // namespace geomshot::pipeline
