#pragma once

#include <map>
#include <span>
#include <string>

#include "geomshot/nnet.hpp"

namespace geomshot::nnet {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// Global L2 norm over all gradients.
double global_grad_norm(std::span<ParamTensor* const> params);

// Rescales gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<ParamTensor* const> params, double max_norm);

// AdamW with decoupled weight decay and bias correction. Moments are keyed by
// tensor name and start at zero.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config = {});

  const OptimizerConfig& config() const { return config_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long long step_count() const { return step_; }

  // Clips, then updates each tensor in `params`. Throws NonFiniteGradient
  // (leaving every tensor untouched) if any gradient is NaN or infinite.
  // Returns the pre-clip gradient norm.
  double step(std::span<ParamTensor* const> params);

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };

  OptimizerConfig config_;
  double lr_;
  long long step_ = 0;
  std::map<std::string, Moments> moments_;
};

// base_lr * (1 + cos(pi * epoch / total_epochs)) / 2, floored at 0.
double cosine_lr(double base_lr, int epoch, int total_epochs);

}  // namespace geomshot::nnet
