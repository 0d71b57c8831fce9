#pragma once

// Dense encoder stack with hand-written forward/backward passes.
//
//   input -> [Linear -> BatchNorm1d -> ReLU -> Dropout] x num_hidden -> Linear
//
// All arithmetic is double precision. Batches are row-major in the logical
// sense: one sample per row.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "geomshot/rng.hpp"

namespace geomshot::nnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  Matrix value;  // 1-D tensors are stored as n x 1
  Matrix grad;
  bool trainable = true;
  // Bumped on every in-place update; forward caches record it.
  std::uint64_t version = 0;

  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<std::size_t> shape, bool trainable);

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

struct EncoderConfig {
  int input_dim = 20;
  int hidden_dim = 256;
  int num_hidden = 2;
  int embed_dim = 128;
  double dropout = 0.3;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// ---- layer primitives -----------------------------------------------------

// y = x W^T + b, W is out x in.
Matrix linear_forward(const Matrix& x, const Matrix& weight, const Matrix& bias);
// Accumulates into weight_grad / bias_grad; returns dL/dx.
Matrix linear_backward(const Matrix& x, const Matrix& weight, const Matrix& upstream,
                       Matrix& weight_grad, Matrix& bias_grad);

struct BatchNormCache {
  bool batch_stats = true;
  Matrix normalized;   // x_hat
  Vector inv_std;      // 1 / sqrt(var + eps), per feature
};

// Train mode normalises with the biased batch variance and folds the
// unbiased variance into the running estimate.
Matrix batchnorm_forward_train(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                               Matrix& running_mean, Matrix& running_var, BatchNormCache* cache);
Matrix batchnorm_forward_eval(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                              const Matrix& running_mean, const Matrix& running_var,
                              BatchNormCache* cache);
Matrix batchnorm_backward(const BatchNormCache& cache, const Matrix& gamma, const Matrix& upstream,
                          Matrix& gamma_grad, Matrix& beta_grad);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

// Inverted dropout: the returned mask holds 0 or 1/(1-p).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

// ---- encoder --------------------------------------------------------------

enum class ForwardMode { Train, Eval };

struct ForwardCache {
  struct Block {
    Matrix input;
    Matrix pre_bn;
    BatchNormCache bn;
    Matrix pre_relu;
    Matrix dropout;  // empty when dropout was not applied
  };
  ForwardMode mode = ForwardMode::Eval;
  std::vector<Block> blocks;
  Matrix head_input;
  std::vector<std::uint64_t> versions;
  bool filled = false;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::uint64_t init_seed);

  const EncoderConfig& config() const { return config_; }

  // Batch statistics, dropout active, running statistics updated.
  // Throws BatchTooSmall for a single-row batch.
  Matrix forward_train(const Matrix& x, Rng& rng, ForwardCache* cache);
  // Running statistics, no dropout, no state mutation.
  Matrix forward_eval(const Matrix& x, ForwardCache* cache = nullptr) const;

  // Accumulates parameter gradients and returns dL/dinput. Throws CacheError
  // when the cache is empty or parameters changed since it was filled.
  Matrix backward(const ForwardCache& cache, const Matrix& upstream);

  void zero_grad();

  // All tensors in a fixed order, buffers (running statistics) included.
  std::vector<ParamTensor*> tensors();
  std::vector<const ParamTensor*> tensors() const;
  std::vector<ParamTensor*> trainable_parameters();
  // Weight and bias of the final projection.
  std::vector<ParamTensor*> head_parameters();

  // Trainable scalars (Linear weights/biases, BatchNorm scale/shift).
  std::size_t parameter_count() const;
  std::size_t buffer_count() const;

  // Copies values from tensors with matching names and shapes; throws
  // CorruptCheckpoint on any missing or mis-shaped tensor.
  void load_tensors(const std::vector<ParamTensor>& source);

 private:
  struct Linear {
    ParamTensor weight;
    ParamTensor bias;
  };
  struct BatchNorm {
    ParamTensor weight;
    ParamTensor bias;
    ParamTensor running_mean;
    ParamTensor running_var;
  };
  struct Block {
    Linear linear;
    BatchNorm bn;
  };

  std::vector<std::uint64_t> current_versions() const;

  EncoderConfig config_;
  std::vector<Block> blocks_;
  Linear head_;
};

std::size_t expected_parameter_count(const EncoderConfig& config);

}  // namespace geomshot::nnet
