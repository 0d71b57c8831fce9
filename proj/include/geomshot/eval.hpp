#pragma once

// Episodic evaluation, baselines, ablation, multi-seed aggregation and error
// analysis.

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geomshot/config.hpp"
#include "geomshot/dataset.hpp"
#include "geomshot/features.hpp"
#include "geomshot/nnet.hpp"

namespace geomshot::eval {

using Matrix = Eigen::MatrixXd;

double mean(std::span<const double> values);
// n - 1 denominator; 0 for fewer than two values.
double sample_stddev(std::span<const double> values);
// 1.96 * sample_stddev / sqrt(n)
double ci95_halfwidth(std::span<const double> values);

struct EvalReport {
  std::vector<double> episode_accuracies;
  double mean = 0.0;
  double stddev = 0.0;
  double ci95 = 0.0;
  // Keyed by original class id.
  std::map<int, double> per_class_accuracy;
  std::map<int, std::size_t> per_class_queries;
  std::map<std::pair<int, int>, std::size_t> confusion;  // (true, predicted) -> count
  std::vector<std::string> class_names;
  // dataset, representation, normalize, encoder, method, mode, n_way, k_shot,
  // q_query, episodes, seed
  nlohmann::ordered_json config;
};

// Worker count: GEOMSHOT_THREADS if set to a positive integer, else the
// number of hardware threads.
unsigned eval_threads();

// Episode i uses seed spec.seed + i. Support and query rows are embedded in
// eval mode (or used directly when encoder is null), queries go to the
// nearest prototype. `mode` is echoed into the report config.
EvalReport evaluate(const nnet::Encoder* encoder, const FeatureTable& test, const EvalConfig& spec,
                    const std::string& mode = "within_domain");

// evaluate() with the identity embedding.
EvalReport input_space_baseline(const FeatureTable& test, const EvalConfig& spec);

struct SoftmaxRegressionOptions {
  int iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-3;  // penalty (l2 / 2) * ||W||^2, bias unpenalised
  bool standardize = true;
};

struct SoftmaxRegression {
  Matrix weights;  // classes x dim
  Eigen::VectorXd bias;
  Eigen::RowVectorXd center;
  Eigen::RowVectorXd scale;
};

// Full-batch gradient descent from zero weights on mean cross-entropy.
// Features are z-scored with the training mean/std when standardize is set.
SoftmaxRegression fit_softmax_regression(const Matrix& x, std::span<const int> labels, int num_classes,
                                         const SoftmaxRegressionOptions& options = {});
Matrix softmax_regression_logits(const SoftmaxRegression& model, const Matrix& x);
std::vector<int> softmax_regression_predict(const SoftmaxRegression& model, const Matrix& x);

// Per episode: logistic regression on the N*K support embeddings, queries
// classified by it.
EvalReport episode_linear_baseline(const nnet::Encoder& encoder, const FeatureTable& test,
                                   const EvalConfig& spec, const SoftmaxRegressionOptions& options = {});

// Softmax regression on every train row, accuracy over every test row.
// Throws DegenerateProblem when train holds fewer than two classes.
double full_data_linear(const FeatureTable& train, const FeatureTable& test,
                        const SoftmaxRegressionOptions& options = {});

struct AblationCell {
  int k_shot = 0;
  double mean = 0.0;
  double ci95 = 0.0;
};

struct AblationRow {
  std::string setting;
  FeatureOptions features;
  std::vector<AblationCell> cells;
};

struct AblationTable {
  std::string dataset;
  std::string encoder;  // "none" or "mlp"
  std::vector<AblationRow> rows;
};

inline constexpr const char* kAblationNoNorm = "No normalisation";
inline constexpr const char* kAblationNormalized = "+ Wrist-centring & scale";
inline constexpr const char* kAblationAngle = "+ Geometry-aware (angle)";

// Rows: raw without normalisation, raw with wrist-centring and scale,
// angle. Columns: `shots` (default 1, 3, 5). Input-space unless
// `train_config` is given, in which case one encoder per row is trained on
// the train side and evaluated.
AblationTable ablation_normalization(const DatasetCatalog& catalog, const SplitFile& split,
                                     const EvalConfig& spec, const RunConfig* train_config = nullptr,
                                     std::vector<int> shots = {1, 3, 5});

struct MultiSeedReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> means;
  std::vector<double> ci95s;
  double mean = 0.0;
  double stddev = 0.0;  // across seeds, n - 1 denominator
};

inline const std::vector<std::uint64_t> kDefaultSeeds = {42, 1337, 2024};

MultiSeedReport multi_seed(const std::function<EvalReport(std::uint64_t)>& run,
                           const std::vector<std::uint64_t>& seeds = kDefaultSeeds);

struct ConfusedPair {
  int true_class = 0;
  int predicted_class = 0;
  std::size_t count = 0;
};

struct ErrorAnalysis {
  std::vector<std::pair<int, double>> ranking;  // ascending accuracy, ties by class id
  std::vector<ConfusedPair> confused;           // off-diagonal, descending count
  std::size_t total_queries = 0;
};

ErrorAnalysis error_analysis(const EvalReport& report);

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string report_json_text(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json ablation_to_json(const AblationTable& table);
nlohmann::ordered_json multi_seed_to_json(const MultiSeedReport& report);
nlohmann::ordered_json error_analysis_to_json(const ErrorAnalysis& analysis,
                                              const std::vector<std::string>& class_names = {});

// Columns: dataset,repr,encoder,mode,K,mean,ci95 (accuracies in percent).
std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string ablation_to_csv(const AblationTable& table);
// Setting per row, one column per shot count.
std::string ablation_to_wide_csv(const AblationTable& table);

}  // namespace geomshot::eval
