#include "geomshot/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geomshot/error.hpp"

namespace geomshot::nnet {

double global_grad_norm(std::span<ParamTensor* const> params) {
  double sq = 0.0;
  for (const ParamTensor* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<ParamTensor* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (ParamTensor* p : params) p->grad *= scale;
  }
  return norm;
}

AdamW::AdamW(OptimizerConfig config) : config_(config), lr_(config.learning_rate) {}

double AdamW::step(std::span<ParamTensor* const> params) {
  for (const ParamTensor* p : params)
    if (!p->grad.allFinite())
      throw Error(ErrorCode::NonFiniteGradient, "gradient of '" + p->name + "' is not finite", p->name);

  const double norm = clip_grad_norm(params, config_.clip_norm);
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);

  for (ParamTensor* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& m = it->second;
    if (inserted || m.first.rows() != p->value.rows() || m.first.cols() != p->value.cols()) {
      m.first = Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    m.first = config_.beta1 * m.first + (1.0 - config_.beta1) * p->grad;
    m.second = config_.beta2 * m.second + (1.0 - config_.beta2) * p->grad.cwiseAbs2();

    p->value *= 1.0 - lr_ * config_.weight_decay;
    const auto m_hat = m.first.array() / correction1;
    const auto v_hat = m.second.array() / correction2;
    p->value.array() -= lr_ * m_hat / (v_hat.sqrt() + config_.epsilon);
    ++p->version;
  }
  return norm;
}

double cosine_lr(double base_lr, int epoch, int total_epochs) {
  if (total_epochs <= 0) return base_lr;
  const double progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace geomshot::nnet
