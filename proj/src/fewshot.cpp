#include "geomshot/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "geomshot/error.hpp"

namespace geomshot::fewshot {

namespace {

constexpr double kNormFloor = 1e-12;

// Rows of `logits` turned into log-softmax, stabilised by the row max.
Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index m = 0; m < logits.rows(); ++m) {
    const double peak = logits.row(m).maxCoeff();
    const double lse = peak + std::log((logits.row(m).array() - peak).exp().sum());
    out.row(m) = logits.row(m).array() - lse;
  }
  return out;
}

void check_labels(std::span<const int> labels, int n_way) {
  for (int y : labels)
    if (y < 0 || y >= n_way)
      throw Error(ErrorCode::Shape, "label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(n_way) + ")");
}

}  // namespace

Matrix compute_prototypes(const Matrix& support, std::span<const int> labels, int n_way) {
  if (static_cast<Eigen::Index>(labels.size()) != support.rows())
    throw Error(ErrorCode::Shape, "support rows and labels differ in length");
  check_labels(labels, n_way);
  Matrix protos = Matrix::Zero(n_way, support.cols());
  std::vector<int> counts(static_cast<std::size_t>(n_way), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    protos.row(labels[i]) += support.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (int n = 0; n < n_way; ++n) {
    if (counts[static_cast<std::size_t>(n)] == 0)
      throw Error(ErrorCode::Shape, "class " + std::to_string(n) + " has no support samples");
    if (counts[static_cast<std::size_t>(n)] != counts[0])
      throw Error(ErrorCode::Shape, "classes have unequal support counts");
    protos.row(n) /= static_cast<double>(counts[static_cast<std::size_t>(n)]);
  }
  return protos;
}

Matrix squared_distances(const Matrix& queries, const Matrix& prototypes) {
  if (queries.cols() != prototypes.cols())
    throw Error(ErrorCode::Shape, "query and prototype dimensions differ");
  Matrix d(queries.rows(), prototypes.rows());
  for (Eigen::Index m = 0; m < queries.rows(); ++m)
    for (Eigen::Index n = 0; n < prototypes.rows(); ++n)
      d(m, n) = (queries.row(m) - prototypes.row(n)).squaredNorm();
  return d;
}

Matrix proto_log_probs(const Matrix& queries, const Matrix& prototypes) {
  return log_softmax_rows(-squared_distances(queries, prototypes));
}

double protonet_nll(const Matrix& log_probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != log_probs.rows())
    throw Error(ErrorCode::Shape, "log-prob rows and labels differ in length");
  check_labels(labels, static_cast<int>(log_probs.cols()));
  double total = 0.0;
  for (std::size_t m = 0; m < labels.size(); ++m)
    total -= log_probs(static_cast<Eigen::Index>(m), labels[m]);
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

std::vector<int> classify(const Matrix& queries, const Matrix& prototypes) {
  const Matrix d = squared_distances(queries, prototypes);
  std::vector<int> out(static_cast<std::size_t>(queries.rows()), 0);
  for (Eigen::Index m = 0; m < d.rows(); ++m) {
    Eigen::Index best = 0;
    for (Eigen::Index n = 1; n < d.cols(); ++n)
      if (d(m, n) < d(m, best)) best = n;
    out[static_cast<std::size_t>(m)] = static_cast<int>(best);
  }
  return out;
}

double supcon_loss(const Matrix& embeddings, std::span<const int> labels, double tau,
                   Matrix* grad) {
  const Eigen::Index batch = embeddings.rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw Error(ErrorCode::Shape, "embedding rows and labels differ in length");
  if (batch < 2) throw Error(ErrorCode::Shape, "supcon needs at least two embeddings");

  const Eigen::VectorXd norms = embeddings.rowwise().norm().cwiseMax(kNormFloor);
  const Matrix unit = norms.cwiseInverse().asDiagonal() * embeddings;
  const Matrix sim = unit * unit.transpose() / tau;

  // dL/dsim accumulated per anchor, then averaged.
  Matrix g = Matrix::Zero(batch, batch);
  double total = 0.0;
  int anchors = 0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    int positives = 0;
    for (Eigen::Index a = 0; a < batch; ++a)
      if (a != i && labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)])
        ++positives;
    if (positives == 0) continue;
    ++anchors;

    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < batch; ++a)
      if (a != i) peak = std::max(peak, sim(i, a));
    double denom = 0.0;
    for (Eigen::Index a = 0; a < batch; ++a)
      if (a != i) denom += std::exp(sim(i, a) - peak);
    const double lse = peak + std::log(denom);

    double anchor_loss = 0.0;
    for (Eigen::Index a = 0; a < batch; ++a) {
      if (a == i) continue;
      const bool positive = labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)];
      if (positive) anchor_loss -= (sim(i, a) - lse);
      g(i, a) = std::exp(sim(i, a) - lse) - (positive ? 1.0 / positives : 0.0);
    }
    total += anchor_loss / positives;
  }
  if (anchors == 0) throw Error(ErrorCode::NoPositives, "no anchor has a same-class positive");
  const double loss = total / anchors;

  if (grad) {
    g /= static_cast<double>(anchors);
    const Matrix d_unit = (g + g.transpose()) * unit / tau;
    Matrix d_emb(batch, embeddings.cols());
    for (Eigen::Index i = 0; i < batch; ++i) {
      const double radial = unit.row(i).dot(d_unit.row(i));
      d_emb.row(i) = (d_unit.row(i) - radial * unit.row(i)) / norms[i];
    }
    *grad = std::move(d_emb);
  }
  return loss;
}

LossBreakdown episode_loss(const Matrix& embeddings, std::span<const int> support_labels,
                           std::span<const int> query_labels, int n_way, double weight, double tau,
                           Matrix* grad) {
  const auto n_support = static_cast<Eigen::Index>(support_labels.size());
  const auto n_query = static_cast<Eigen::Index>(query_labels.size());
  if (embeddings.rows() != n_support + n_query)
    throw Error(ErrorCode::Shape, "embedding rows do not match support + query labels");
  check_labels(query_labels, n_way);

  const Matrix support = embeddings.topRows(n_support);
  const Matrix query = embeddings.bottomRows(n_query);
  const Matrix protos = compute_prototypes(support, support_labels, n_way);
  const Matrix log_probs = proto_log_probs(query, protos);

  LossBreakdown out;
  out.weight = weight;
  out.temperature = tau;
  out.nll = protonet_nll(log_probs, query_labels);

  std::vector<int> all_labels(support_labels.begin(), support_labels.end());
  all_labels.insert(all_labels.end(), query_labels.begin(), query_labels.end());
  Matrix supcon_grad;
  out.supcon = supcon_loss(embeddings, all_labels, tau, grad ? &supcon_grad : nullptr);
  out.total = out.nll + weight * out.supcon;

  if (grad) {
    // G = dL/dlogits with logits = -D.
    Matrix g = log_probs.array().exp();
    for (Eigen::Index m = 0; m < n_query; ++m) g(m, query_labels[static_cast<std::size_t>(m)]) -= 1.0;
    g /= static_cast<double>(n_query);

    const Matrix d_query = 2.0 * (g * protos);
    const Eigen::VectorXd col_sums = g.colwise().sum().transpose();
    const Matrix d_protos = 2.0 * (g.transpose() * query) - 2.0 * (col_sums.asDiagonal() * protos);
    const double shots = static_cast<double>(n_support) / n_way;

    Matrix total = weight * supcon_grad;
    for (Eigen::Index i = 0; i < n_support; ++i)
      total.row(i) += d_protos.row(support_labels[static_cast<std::size_t>(i)]) / shots;
    total.bottomRows(n_query) += d_query;
    *grad = std::move(total);
  }
  return out;
}

}  // namespace geomshot::fewshot
