#pragma once

// Prototypical-network head and the episodic training objective.

#include <Eigen/Core>
#include <span>
#include <vector>

namespace geomshot::fewshot {

using Matrix = Eigen::MatrixXd;

inline constexpr double kSupConWeight = 0.5;
inline constexpr double kSupConTemperature = 0.07;

// Row n = mean of the support rows labelled n. Every label in [0, n_way)
// must occur the same, nonzero number of times (ShapeError otherwise).
Matrix compute_prototypes(const Matrix& support, std::span<const int> labels, int n_way);

// Squared Euclidean distances, queries x prototypes.
Matrix squared_distances(const Matrix& queries, const Matrix& prototypes);

// log softmax_n(-||z_m - c_n||^2)
Matrix proto_log_probs(const Matrix& queries, const Matrix& prototypes);

// Mean over rows of -log_probs(m, labels[m]).
double protonet_nll(const Matrix& log_probs, std::span<const int> labels);

// Nearest prototype; ties go to the lowest class index.
std::vector<int> classify(const Matrix& queries, const Matrix& prototypes);

// Supervised contrastive loss on L2-normalised rows: mean over anchors with
// at least one positive of -1/|P(i)| sum_p log softmax_{a != i}(z_i.z_a / tau)[p].
// Throws NoPositivesError when no anchor has a positive. When `grad` is
// non-null it receives dL/d(embeddings).
double supcon_loss(const Matrix& embeddings, std::span<const int> labels, double tau,
                   Matrix* grad = nullptr);

struct LossBreakdown {
  double nll = 0.0;
  double supcon = 0.0;
  double weight = kSupConWeight;
  double temperature = kSupConTemperature;
  double total = 0.0;  // nll + weight * supcon
};

// Episode objective on a batch whose first `support_labels.size()` rows are
// support embeddings and remaining rows are queries. NLL is taken over the
// queries; SupCon over all rows. `grad` receives dL/d(embeddings).
LossBreakdown episode_loss(const Matrix& embeddings, std::span<const int> support_labels,
                           std::span<const int> query_labels, int n_way,
                           double weight = kSupConWeight, double tau = kSupConTemperature,
                           Matrix* grad = nullptr);

}  // namespace geomshot::fewshot
