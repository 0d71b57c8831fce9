#include "geomshot/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "geomshot/checkpoint.hpp"
#include "geomshot/episodes.hpp"
#include "geomshot/error.hpp"
#include "geomshot/fewshot.hpp"
#include "geomshot/pipeline.hpp"

namespace geomshot::eval {

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double sq = 0.0;
  for (double v : values) sq += (v - m) * (v - m);
  return std::sqrt(sq / static_cast<double>(values.size() - 1));
}

double ci95_halfwidth(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return 1.96 * sample_stddev(values) / std::sqrt(static_cast<double>(values.size()));
}

unsigned eval_threads() {
  if (const char* env = std::getenv("GEOMSHOT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct Outcome {
  double accuracy = 0.0;
  std::vector<std::pair<int, int>> pairs;  // (true, predicted), original class ids
};

// Runs fn(i) for i in [0, count) on a worker pool; results land at index i so
// the output is independent of scheduling.
template <typename Fn>
std::vector<Outcome> run_parallel(int count, Fn fn) {
  std::vector<Outcome> out(static_cast<std::size_t>(count));
  const unsigned workers = std::min<unsigned>(eval_threads(), static_cast<unsigned>(std::max(count, 1)));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<ClassPool> require_pool(const FeatureTable& table, const EpisodeShape& shape) {
  auto pool = build_pool(table, shape.k_shot, shape.q_query);
  if (pool.size() < static_cast<std::size_t>(shape.n_way))
    throw Error(ErrorCode::InsufficientClasses,
                "'" + table.dataset + "' has " + std::to_string(pool.size()) +
                    " eligible classes at K+Q=" + std::to_string(shape.k_shot + shape.q_query) +
                    ", need " + std::to_string(shape.n_way));
  return pool;
}

EpisodeSpec episode_spec(const EvalConfig& spec, int index) {
  return {spec.episode.n_way, spec.episode.k_shot, spec.episode.q_query, spec.seed,
          static_cast<std::uint64_t>(index)};
}

Matrix take_rows(const Matrix& source, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Outcome score(const Episode& ep, const std::vector<int>& predicted) {
  Outcome o;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    correct += predicted[i] == ep.query_labels[i];
    o.pairs.emplace_back(ep.class_map[static_cast<std::size_t>(ep.query_labels[i])],
                         ep.class_map[static_cast<std::size_t>(predicted[i])]);
  }
  o.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  return o;
}

EvalReport aggregate(const std::vector<Outcome>& outcomes, const FeatureTable& table,
                     const EvalConfig& spec, const std::string& encoder, const std::string& method,
                     const std::string& mode) {
  EvalReport r;
  r.class_names = table.class_names;
  std::map<int, std::size_t> correct;
  for (const auto& o : outcomes) {
    r.episode_accuracies.push_back(o.accuracy);
    for (const auto& [t, p] : o.pairs) {
      ++r.confusion[{t, p}];
      ++r.per_class_queries[t];
      if (t == p) ++correct[t];
    }
  }
  for (const auto& [c, n] : r.per_class_queries)
    r.per_class_accuracy[c] = static_cast<double>(correct[c]) / static_cast<double>(n);
  r.mean = mean(r.episode_accuracies);
  r.stddev = sample_stddev(r.episode_accuracies);
  r.ci95 = ci95_halfwidth(r.episode_accuracies);
  r.config["dataset"] = table.dataset;
  r.config["representation"] = std::string(to_string(table.options.kind));
  r.config["normalize"] = table.options.normalize;
  r.config["encoder"] = encoder;
  r.config["method"] = method;
  r.config["mode"] = mode;
  r.config["n_way"] = spec.episode.n_way;
  r.config["k_shot"] = spec.episode.k_shot;
  r.config["q_query"] = spec.episode.q_query;
  r.config["episodes"] = spec.episodes;
  r.config["seed"] = spec.seed;
  return r;
}

}  // namespace

EvalReport evaluate(const nnet::Encoder* encoder, const FeatureTable& test, const EvalConfig& spec,
                    const std::string& mode) {
  const auto pool = require_pool(test, spec.episode);
  if (encoder && encoder->config().input_dim != test.dim())
    throw Error(ErrorCode::ConfigMismatch, "encoder input width differs from the data");
  // Eval-mode embedding is row-independent, so every row is embedded once.
  const Matrix embedded = encoder ? encoder->forward_eval(test.rows) : test.rows;
  const auto outcomes = run_parallel(spec.episodes, [&](int i) {
    const Episode ep = sample_episode(pool, episode_spec(spec, i));
    const Matrix protos = fewshot::compute_prototypes(take_rows(embedded, ep.support), ep.support_labels,
                                                      spec.episode.n_way);
    return score(ep, fewshot::classify(take_rows(embedded, ep.query), protos));
  });
  return aggregate(outcomes, test, spec, encoder ? "mlp" : "none",
                   encoder ? "protonet" : "input_space", encoder ? mode : "input_space");
}

EvalReport input_space_baseline(const FeatureTable& test, const EvalConfig& spec) {
  return evaluate(nullptr, test, spec);
}

SoftmaxRegression fit_softmax_regression(const Matrix& x, std::span<const int> labels, int num_classes,
                                         const SoftmaxRegressionOptions& options) {
  const Eigen::Index n = x.rows();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n)
    throw Error(ErrorCode::Shape, "softmax regression needs one label per nonempty row");
  SoftmaxRegression model;
  if (options.standardize) {
    model.center = x.colwise().mean();
    model.scale = ((x.rowwise() - model.center).array().square().colwise().mean()).sqrt().matrix();
    model.scale = model.scale.cwiseMax(1e-8);
  } else {
    model.center = Eigen::RowVectorXd::Zero(x.cols());
    model.scale = Eigen::RowVectorXd::Ones(x.cols());
  }
  const Matrix z = (x.rowwise() - model.center).array().rowwise() / model.scale.array();
  model.weights = Matrix::Zero(num_classes, x.cols());
  model.bias = Eigen::VectorXd::Zero(num_classes);
  Matrix onehot = Matrix::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  for (int it = 0; it < options.iterations; ++it) {
    Matrix logits = z * model.weights.transpose();
    logits.rowwise() += model.bias.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double peak = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - peak).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Matrix g = (logits - onehot) / static_cast<double>(n);
    const Matrix grad_w = g.transpose() * z + options.l2 * model.weights;
    const Eigen::VectorXd grad_b = g.colwise().sum().transpose();
    model.weights -= options.learning_rate * grad_w;
    model.bias -= options.learning_rate * grad_b;
  }
  return model;
}

Matrix softmax_regression_logits(const SoftmaxRegression& model, const Matrix& x) {
  const Matrix z = (x.rowwise() - model.center).array().rowwise() / model.scale.array();
  Matrix logits = z * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  return logits;
}

std::vector<int> softmax_regression_predict(const SoftmaxRegression& model, const Matrix& x) {
  const Matrix logits = softmax_regression_logits(model, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

EvalReport episode_linear_baseline(const nnet::Encoder& encoder, const FeatureTable& test,
                                   const EvalConfig& spec, const SoftmaxRegressionOptions& options) {
  const auto pool = require_pool(test, spec.episode);
  if (encoder.config().input_dim != test.dim())
    throw Error(ErrorCode::ConfigMismatch, "encoder input width differs from the data");
  const Matrix embedded = encoder.forward_eval(test.rows);
  const auto outcomes = run_parallel(spec.episodes, [&](int i) {
    const Episode ep = sample_episode(pool, episode_spec(spec, i));
    const auto model = fit_softmax_regression(take_rows(embedded, ep.support), ep.support_labels,
                                              spec.episode.n_way, options);
    return score(ep, softmax_regression_predict(model, take_rows(embedded, ep.query)));
  });
  return aggregate(outcomes, test, spec, "mlp", "episode_linear", "episode_linear");
}

double full_data_linear(const FeatureTable& train, const FeatureTable& test,
                        const SoftmaxRegressionOptions& options) {
  if (train.size() == 0 || test.size() == 0)
    throw Error(ErrorCode::DegenerateProblem, "train and test splits must be nonempty");
  std::size_t present = 0;
  for (std::size_t c : train.class_counts()) present += c > 0;
  if (present < 2)
    throw Error(ErrorCode::DegenerateProblem, "full-data linear classifier needs at least two classes");
  if (train.dim() != test.dim()) throw Error(ErrorCode::Shape, "train and test widths differ");
  const auto model = fit_softmax_regression(train.rows, train.class_ids,
                                            static_cast<int>(train.num_classes), options);
  const auto predicted = softmax_regression_predict(model, test.rows);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test.class_ids[i];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

AblationTable ablation_normalization(const DatasetCatalog& catalog, const SplitFile& split,
                                     const EvalConfig& spec, const RunConfig* train_config,
                                     std::vector<int> shots) {
  validate_split(split, catalog);
  const auto test_idx = resolve_paths(split.test, catalog);
  const auto train_idx = resolve_paths(split.train, catalog);

  AblationTable table;
  table.dataset = catalog.name;
  table.encoder = train_config ? "mlp" : "none";
  const std::vector<std::pair<const char*, FeatureOptions>> settings = {
      {kAblationNoNorm, {FeatureKind::Raw, false}},
      {kAblationNormalized, {FeatureKind::Raw, true}},
      {kAblationAngle, {FeatureKind::Angle, true}},
  };
  for (const auto& [label, options] : settings) {
    AblationRow row{label, options, {}};
    const FeatureTable test = build_features(catalog, test_idx, options);
    std::optional<nnet::Encoder> encoder;
    if (train_config) {
      RunConfig cfg = *train_config;
      cfg.features = options;
      cfg.encoder.input_dim = feature_dim(options.kind);
      const FeatureTable train = build_features(catalog, train_idx, options);
      encoder = nnet::encoder_from_checkpoint(pipeline::train_within_domain(train, cfg).checkpoint);
    }
    for (int k : shots) {
      EvalConfig s = spec;
      s.episode.k_shot = k;
      const EvalReport r = evaluate(encoder ? &*encoder : nullptr, test, s);
      row.cells.push_back({k, r.mean, r.ci95});
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

MultiSeedReport multi_seed(const std::function<EvalReport(std::uint64_t)>& run,
                           const std::vector<std::uint64_t>& seeds) {
  MultiSeedReport out;
  out.seeds = seeds;
  for (std::uint64_t s : seeds) {
    const EvalReport r = run(s);
    out.means.push_back(r.mean);
    out.ci95s.push_back(r.ci95);
  }
  out.mean = mean(out.means);
  out.stddev = sample_stddev(out.means);
  return out;
}

ErrorAnalysis error_analysis(const EvalReport& report) {
  ErrorAnalysis a;
  for (const auto& [c, acc] : report.per_class_accuracy) a.ranking.emplace_back(c, acc);
  std::stable_sort(a.ranking.begin(), a.ranking.end(),
                   [](const auto& x, const auto& y) { return x.second < y.second; });
  for (const auto& [key, count] : report.confusion) {
    a.total_queries += count;
    if (key.first != key.second && count > 0) a.confused.push_back({key.first, key.second, count});
  }
  std::stable_sort(a.confused.begin(), a.confused.end(),
                   [](const ConfusedPair& x, const ConfusedPair& y) { return x.count > y.count; });
  return a;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "geomshot-eval-report";
  j["version"] = 1;
  j["config"] = r.config;
  j["mean"] = r.mean;
  j["stddev"] = r.stddev;
  j["ci95"] = r.ci95;
  j["episode_accuracies"] = r.episode_accuracies;
  auto per_class = nlohmann::ordered_json::array();
  for (const auto& [c, acc] : r.per_class_accuracy) {
    nlohmann::ordered_json e;
    e["class_id"] = c;
    if (static_cast<std::size_t>(c) < r.class_names.size())
      e["class_name"] = r.class_names[static_cast<std::size_t>(c)];
    e["accuracy"] = acc;
    e["queries"] = r.per_class_queries.at(c);
    per_class.push_back(std::move(e));
  }
  j["per_class"] = std::move(per_class);
  auto confusion = nlohmann::ordered_json::array();
  for (const auto& [key, count] : r.confusion)
    confusion.push_back({{"true", key.first}, {"predicted", key.second}, {"count", count}});
  j["confusion"] = std::move(confusion);
  return j;
}

std::string report_json_text(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  try {
    if (j.at("schema") != "geomshot-eval-report")
      throw Error(ErrorCode::Format, "not an evaluation report", "schema");
    r.config = j.at("config");
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("stddev").get<double>();
    r.ci95 = j.at("ci95").get<double>();
    r.episode_accuracies = j.at("episode_accuracies").get<std::vector<double>>();
    for (const auto& e : j.at("per_class")) {
      const int c = e.at("class_id").get<int>();
      r.per_class_accuracy[c] = e.at("accuracy").get<double>();
      r.per_class_queries[c] = e.at("queries").get<std::size_t>();
      if (e.contains("class_name")) {
        if (r.class_names.size() <= static_cast<std::size_t>(c)) r.class_names.resize(static_cast<std::size_t>(c) + 1);
        r.class_names[static_cast<std::size_t>(c)] = e.at("class_name").get<std::string>();
      }
    }
    for (const auto& e : j.at("confusion"))
      r.confusion[{e.at("true").get<int>(), e.at("predicted").get<int>()}] = e.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("report JSON: ") + e.what(), "report");
  }
  return r;
}

nlohmann::ordered_json ablation_to_json(const AblationTable& table) {
  nlohmann::ordered_json j;
  j["dataset"] = table.dataset;
  j["encoder"] = table.encoder;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json r;
    r["setting"] = row.setting;
    r["representation"] = std::string(to_string(row.features.kind));
    r["normalize"] = row.features.normalize;
    auto cells = nlohmann::ordered_json::array();
    for (const auto& c : row.cells) cells.push_back({{"k_shot", c.k_shot}, {"mean", c.mean}, {"ci95", c.ci95}});
    r["cells"] = std::move(cells);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j;
}

nlohmann::ordered_json multi_seed_to_json(const MultiSeedReport& report) {
  nlohmann::ordered_json j;
  auto per_seed = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.seeds.size(); ++i)
    per_seed.push_back({{"seed", report.seeds[i]}, {"mean", report.means[i]}, {"ci95", report.ci95s[i]}});
  j["per_seed"] = std::move(per_seed);
  j["mean"] = report.mean;
  j["stddev"] = report.stddev;
  return j;
}

nlohmann::ordered_json error_analysis_to_json(const ErrorAnalysis& analysis,
                                              const std::vector<std::string>& class_names) {
  auto name = [&](int c) -> std::string {
    return static_cast<std::size_t>(c) < class_names.size() ? class_names[static_cast<std::size_t>(c)]
                                                             : std::to_string(c);
  };
  nlohmann::ordered_json j;
  auto ranking = nlohmann::ordered_json::array();
  for (const auto& [c, acc] : analysis.ranking)
    ranking.push_back({{"class_id", c}, {"class_name", name(c)}, {"accuracy", acc}});
  j["ranking"] = std::move(ranking);
  auto confused = nlohmann::ordered_json::array();
  for (const auto& p : analysis.confused)
    confused.push_back({{"true", p.true_class}, {"predicted", p.predicted_class}, {"count", p.count}});
  j["confused_pairs"] = std::move(confused);
  j["total_queries"] = analysis.total_queries;
  return j;
}

namespace {

std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string config_string(const nlohmann::ordered_json& config, const char* key) {
  if (!config.contains(key)) return "";
  const auto& v = config.at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::string out = "dataset,repr,encoder,mode,K,mean,ci95\n";
  for (const auto& r : reports) {
    out += csv_field(config_string(r.config, "dataset")) + "," + config_string(r.config, "representation") +
           "," + config_string(r.config, "encoder") + "," + config_string(r.config, "mode") + "," +
           config_string(r.config, "k_shot") + "," + percent(r.mean) + "," + percent(r.ci95) + "\n";
  }
  return out;
}

std::string ablation_to_csv(const AblationTable& table) {
  std::string out = "dataset,repr,encoder,mode,K,mean,ci95\n";
  for (const auto& row : table.rows) {
    const std::string mode = row.features.normalize ? "normalized" : "no_norm";
    for (const auto& c : row.cells)
      out += csv_field(table.dataset) + "," + std::string(to_string(row.features.kind)) + "," +
             table.encoder + "," + mode + "," + std::to_string(c.k_shot) + "," + percent(c.mean) + "," +
             percent(c.ci95) + "\n";
  }
  return out;
}

std::string ablation_to_wide_csv(const AblationTable& table) {
  std::string out = "setting";
  if (!table.rows.empty())
    for (const auto& c : table.rows.front().cells) out += "," + std::to_string(c.k_shot) + "-shot";
  out += "\n";
  for (const auto& row : table.rows) {
    out += csv_field(row.setting);
    for (const auto& c : row.cells) out += "," + percent(c.mean);
    out += "\n";
  }
  return out;
}

}  // namespace geomshot::eval
