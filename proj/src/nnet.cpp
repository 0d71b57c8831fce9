#include "geomshot/nnet.hpp"

#include <cmath>

#include "geomshot/error.hpp"

namespace geomshot::nnet {

ParamTensor::ParamTensor(std::string name_, std::vector<std::size_t> shape_, bool trainable_)
    : name(std::move(name_)), shape(std::move(shape_)), trainable(trainable_) {
  const auto rows = static_cast<Eigen::Index>(shape.at(0));
  const auto cols = static_cast<Eigen::Index>(shape.size() > 1 ? shape[1] : 1);
  value = Matrix::Zero(rows, cols);
  grad = Matrix::Zero(rows, cols);
}

void EncoderConfig::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || num_hidden <= 0 || embed_dim <= 0)
    throw Error(ErrorCode::Config, "encoder dimensions must be positive", "encoder");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw Error(ErrorCode::Config, "dropout must lie in [0, 1)", "dropout");
}

// ---- layer primitives -----------------------------------------------------

Matrix linear_forward(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.col(0).transpose();
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& weight, const Matrix& upstream,
                       Matrix& weight_grad, Matrix& bias_grad) {
  weight_grad.noalias() += upstream.transpose() * x;
  bias_grad.col(0) += upstream.colwise().sum().transpose();
  return upstream * weight;
}

Matrix batchnorm_forward_train(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                               Matrix& running_mean, Matrix& running_var, BatchNormCache* cache) {
  const auto batch = x.rows();
  if (batch < 2)
    throw Error(ErrorCode::BatchTooSmall, "train-mode batch normalisation needs at least 2 rows");
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  const Vector sq_sum = centered.array().square().colwise().sum().transpose();
  const Vector var = sq_sum / static_cast<double>(batch);
  const Vector inv_std = (var.array() + kBatchNormEpsilon).rsqrt();
  Matrix normalized = centered * inv_std.asDiagonal();

  const Vector unbiased = sq_sum / static_cast<double>(batch - 1);
  running_mean.col(0) = (1.0 - kBatchNormMomentum) * running_mean.col(0) + kBatchNormMomentum * mean;
  running_var.col(0) = (1.0 - kBatchNormMomentum) * running_var.col(0) + kBatchNormMomentum * unbiased;

  Matrix y = normalized * gamma.col(0).asDiagonal();
  y.rowwise() += beta.col(0).transpose();
  if (cache) {
    cache->batch_stats = true;
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

Matrix batchnorm_forward_eval(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                              const Matrix& running_mean, const Matrix& running_var,
                              BatchNormCache* cache) {
  const Vector inv_std = (running_var.col(0).array() + kBatchNormEpsilon).rsqrt();
  Matrix normalized = (x.rowwise() - running_mean.col(0).transpose()) * inv_std.asDiagonal();
  Matrix y = normalized * gamma.col(0).asDiagonal();
  y.rowwise() += beta.col(0).transpose();
  if (cache) {
    cache->batch_stats = false;
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

Matrix batchnorm_backward(const BatchNormCache& cache, const Matrix& gamma, const Matrix& upstream,
                          Matrix& gamma_grad, Matrix& beta_grad) {
  gamma_grad.col(0) += (upstream.cwiseProduct(cache.normalized)).colwise().sum().transpose();
  beta_grad.col(0) += upstream.colwise().sum().transpose();
  const Matrix dxhat = upstream * gamma.col(0).asDiagonal();
  if (!cache.batch_stats) return dxhat * cache.inv_std.asDiagonal();

  // dx = inv_std / B * (B dxhat - sum(dxhat) - xhat * sum(dxhat . xhat))
  const double batch = static_cast<double>(upstream.rows());
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.normalized).colwise().sum();
  Matrix dx = batch * dxhat;
  dx.rowwise() -= sum_dxhat;
  dx -= cache.normalized * sum_dxhat_xhat.asDiagonal();
  return dx * (cache.inv_std / batch).asDiagonal();
}

Matrix relu_forward(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  return (x.array() > 0.0).select(upstream, 0.0);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

// ---- encoder --------------------------------------------------------------

namespace {

void kaiming_uniform(ParamTensor& weight, ParamTensor& bias, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index r = 0; r < weight.value.rows(); ++r)
    for (Eigen::Index c = 0; c < weight.value.cols(); ++c)
      weight.value(r, c) = rng.uniform(-bound, bound);
  for (Eigen::Index r = 0; r < bias.value.rows(); ++r) bias.value(r, 0) = rng.uniform(-bound, bound);
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

Encoder::Encoder(const EncoderConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  int fan_in = config_.input_dim;
  for (int i = 0; i < config_.num_hidden; ++i) {
    const std::string fc = "fc" + std::to_string(i + 1);
    const std::string bn = "bn" + std::to_string(i + 1);
    Block block{
        {ParamTensor(fc + ".weight", {sz(config_.hidden_dim), sz(fan_in)}, true),
         ParamTensor(fc + ".bias", {sz(config_.hidden_dim)}, true)},
        {ParamTensor(bn + ".weight", {sz(config_.hidden_dim)}, true),
         ParamTensor(bn + ".bias", {sz(config_.hidden_dim)}, true),
         ParamTensor(bn + ".running_mean", {sz(config_.hidden_dim)}, false),
         ParamTensor(bn + ".running_var", {sz(config_.hidden_dim)}, false)},
    };
    kaiming_uniform(block.linear.weight, block.linear.bias, fan_in, rng);
    block.bn.weight.value.setOnes();
    block.bn.running_var.value.setOnes();
    blocks_.push_back(std::move(block));
    fan_in = config_.hidden_dim;
  }
  head_ = {ParamTensor("proj.weight", {sz(config_.embed_dim), sz(fan_in)}, true),
           ParamTensor("proj.bias", {sz(config_.embed_dim)}, true)};
  kaiming_uniform(head_.weight, head_.bias, fan_in, rng);
}

std::vector<std::uint64_t> Encoder::current_versions() const {
  std::vector<std::uint64_t> out;
  for (const ParamTensor* t : tensors())
    if (t->trainable) out.push_back(t->version);
  return out;
}

Matrix Encoder::forward_train(const Matrix& x, Rng& rng, ForwardCache* cache) {
  if (x.rows() < 2)
    throw Error(ErrorCode::BatchTooSmall, "train-mode forward needs at least 2 rows");
  if (x.cols() != config_.input_dim)
    throw Error(ErrorCode::Shape, "input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                                      std::to_string(config_.input_dim));
  if (cache) {
    cache->mode = ForwardMode::Train;
    cache->blocks.assign(blocks_.size(), {});
    cache->filled = false;
  }
  Matrix h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    Matrix pre_bn = linear_forward(h, b.linear.weight.value, b.linear.bias.value);
    BatchNormCache bn_cache;
    Matrix pre_relu = batchnorm_forward_train(pre_bn, b.bn.weight.value, b.bn.bias.value,
                                              b.bn.running_mean.value, b.bn.running_var.value,
                                              cache ? &bn_cache : nullptr);
    Matrix out = relu_forward(pre_relu);
    Matrix mask;
    if (config_.dropout > 0.0) {
      mask = dropout_mask(out.rows(), out.cols(), config_.dropout, rng);
      out = out.cwiseProduct(mask);
    }
    if (cache) {
      auto& c = cache->blocks[i];
      c.input = std::move(h);
      c.pre_bn = std::move(pre_bn);
      c.bn = std::move(bn_cache);
      c.pre_relu = std::move(pre_relu);
      c.dropout = std::move(mask);
    }
    h = std::move(out);
  }
  Matrix z = linear_forward(h, head_.weight.value, head_.bias.value);
  if (cache) {
    cache->head_input = std::move(h);
    cache->versions = current_versions();
    cache->filled = true;
  }
  return z;
}

Matrix Encoder::forward_eval(const Matrix& x, ForwardCache* cache) const {
  if (x.cols() != config_.input_dim)
    throw Error(ErrorCode::Shape, "input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                                      std::to_string(config_.input_dim));
  if (cache) {
    cache->mode = ForwardMode::Eval;
    cache->blocks.assign(blocks_.size(), {});
    cache->filled = false;
  }
  Matrix h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    Matrix pre_bn = linear_forward(h, b.linear.weight.value, b.linear.bias.value);
    BatchNormCache bn_cache;
    Matrix pre_relu = batchnorm_forward_eval(pre_bn, b.bn.weight.value, b.bn.bias.value,
                                             b.bn.running_mean.value, b.bn.running_var.value,
                                             cache ? &bn_cache : nullptr);
    Matrix out = relu_forward(pre_relu);
    if (cache) {
      auto& c = cache->blocks[i];
      c.input = std::move(h);
      c.pre_bn = std::move(pre_bn);
      c.bn = std::move(bn_cache);
      c.pre_relu = std::move(pre_relu);
    }
    h = std::move(out);
  }
  Matrix z = linear_forward(h, head_.weight.value, head_.bias.value);
  if (cache) {
    cache->head_input = std::move(h);
    cache->versions = current_versions();
    cache->filled = true;
  }
  return z;
}

Matrix Encoder::backward(const ForwardCache& cache, const Matrix& upstream) {
  if (!cache.filled || cache.blocks.size() != blocks_.size())
    throw Error(ErrorCode::Cache, "backward called without a matching forward cache");
  if (cache.versions != current_versions())
    throw Error(ErrorCode::Cache, "parameters changed since the forward pass");
  if (upstream.rows() != cache.head_input.rows() || upstream.cols() != config_.embed_dim)
    throw Error(ErrorCode::Shape, "upstream gradient shape does not match the forward batch");

  Matrix g = linear_backward(cache.head_input, head_.weight.value, upstream, head_.weight.grad,
                             head_.bias.grad);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    Block& b = blocks_[i];
    const auto& c = cache.blocks[i];
    if (c.dropout.size() > 0) g = g.cwiseProduct(c.dropout);
    g = relu_backward(c.pre_relu, g);
    g = batchnorm_backward(c.bn, b.bn.weight.value, g, b.bn.weight.grad, b.bn.bias.grad);
    g = linear_backward(c.input, b.linear.weight.value, g, b.linear.weight.grad, b.linear.bias.grad);
  }
  return g;
}

void Encoder::zero_grad() {
  for (ParamTensor* t : tensors()) t->grad.setZero();
}

std::vector<ParamTensor*> Encoder::tensors() {
  std::vector<ParamTensor*> out;
  for (auto& b : blocks_) {
    out.insert(out.end(), {&b.linear.weight, &b.linear.bias, &b.bn.weight, &b.bn.bias,
                           &b.bn.running_mean, &b.bn.running_var});
  }
  out.insert(out.end(), {&head_.weight, &head_.bias});
  return out;
}

std::vector<const ParamTensor*> Encoder::tensors() const {
  std::vector<const ParamTensor*> out;
  for (const auto& b : blocks_) {
    out.insert(out.end(), {&b.linear.weight, &b.linear.bias, &b.bn.weight, &b.bn.bias,
                           &b.bn.running_mean, &b.bn.running_var});
  }
  out.insert(out.end(), {&head_.weight, &head_.bias});
  return out;
}

std::vector<ParamTensor*> Encoder::trainable_parameters() {
  std::vector<ParamTensor*> out;
  for (ParamTensor* t : tensors())
    if (t->trainable) out.push_back(t);
  return out;
}

std::vector<ParamTensor*> Encoder::head_parameters() { return {&head_.weight, &head_.bias}; }

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const ParamTensor* t : tensors())
    if (t->trainable) n += t->size();
  return n;
}

std::size_t Encoder::buffer_count() const {
  std::size_t n = 0;
  for (const ParamTensor* t : tensors())
    if (!t->trainable) n += t->size();
  return n;
}

void Encoder::load_tensors(const std::vector<ParamTensor>& source) {
  for (ParamTensor* t : tensors()) {
    const ParamTensor* match = nullptr;
    for (const auto& s : source)
      if (s.name == t->name) match = &s;
    if (!match)
      throw Error(ErrorCode::CorruptCheckpoint, "missing tensor '" + t->name + "'", t->name);
    if (match->value.rows() != t->value.rows() || match->value.cols() != t->value.cols())
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + t->name + "' has the wrong shape", t->name);
    t->value = match->value;
    t->grad.setZero();
    ++t->version;
  }
}

std::size_t expected_parameter_count(const EncoderConfig& config) {
  // Linear weight + bias per layer, BatchNorm scale + shift per hidden layer.
  std::size_t total = 0;
  std::size_t fan_in = sz(config.input_dim);
  for (int i = 0; i < config.num_hidden; ++i) {
    total += fan_in * sz(config.hidden_dim) + sz(config.hidden_dim);
    total += 2 * sz(config.hidden_dim);
    fan_in = sz(config.hidden_dim);
  }
  return total + fan_in * sz(config.embed_dim) + sz(config.embed_dim);
}

}  // namespace geomshot::nnet
