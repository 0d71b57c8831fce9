#include "geomshot/geomshot.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "geomshot/checkpoint.hpp"
#include "geomshot/config.hpp"
#include "geomshot/dataset.hpp"
#include "geomshot/error.hpp"
#include "geomshot/eval.hpp"
#include "geomshot/features.hpp"
#include "geomshot/geometry.hpp"
#include "geomshot/npy.hpp"
#include "geomshot/pipeline.hpp"
#include "geomshot/synth.hpp"

struct gs_dataset {
  geomshot::DatasetCatalog catalog;
};

struct gs_split {
  geomshot::SplitFile split;
};

struct gs_model {
  geomshot::nnet::Checkpoint checkpoint;
};

namespace {

using namespace geomshot;
using json = nlohmann::json;

thread_local std::string g_last_error;
thread_local std::string g_last_field;

gs_status fail(gs_status status, const std::string& message, const std::string& field = {}) {
  g_last_error = message;
  g_last_field = field;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
gs_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    g_last_error.clear();
    g_last_field.clear();
    return GS_OK;
  } catch (const Error& e) {
    return fail(static_cast<gs_status>(e.code()), e.what(), e.field());
  } catch (const json::exception& e) {
    return fail(GS_ERR_FORMAT, std::string("Format: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(GS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GS_ERR_INTERNAL, "unknown exception");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must not be NULL", name);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

HandKeypoints hand_from(const double* kp) {
  require(kp, "keypoints");
  HandKeypoints hand;
  std::memcpy(hand.data(), kp, sizeof(double) * kRawDim);
  return hand;
}

RunConfig config_from(const char* config_json) {
  return config_json ? parse_config(config_json) : default_config();
}

// An explicit config decides the representation (a checkpoint that disagrees
// is a ConfigMismatch); without one, model-bound operations follow the
// checkpoint.
FeatureOptions features_for(const gs_model* model, const RunConfig& config, const char* config_json) {
  FeatureOptions options = config.features;
  if (!model || config_json) return options;
  const auto& md = model->checkpoint.metadata;
  if (auto it = md.find("representation"); it != md.end()) options.kind = parse_feature_kind(it->second);
  if (auto it = md.find("normalize"); it != md.end()) options.normalize = it->second == "true";
  return options;
}

FeatureTable side(const gs_dataset* dataset, const gs_split* split, bool train, FeatureOptions options) {
  require(dataset, "dataset");
  require(split, "split");
  validate_split(split->split, dataset->catalog);
  return build_features(dataset->catalog,
                        resolve_paths(train ? split->split.train : split->split.test, dataset->catalog),
                        options);
}

gs_model* new_model(nnet::Checkpoint checkpoint) { return new gs_model{std::move(checkpoint)}; }

synth::SynthOptions synth_options(const char* options_json) {
  synth::SynthOptions o;
  if (!options_json) return o;
  const json j = json::parse(options_json);
  if (!j.is_object()) throw Error(ErrorCode::Config, "synthetic options must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "classes") o.classes = value.get<int>();
    else if (key == "per_class") o.per_class = value.get<int>();
    else if (key == "noise") o.noise = value.get<double>();
    else if (key == "bone_jitter") o.bone_jitter = value.get<double>();
    else if (key == "transforms") o.transforms = value.get<bool>();
    else if (key == "seed") o.seed = value.get<std::uint64_t>();
    else throw Error(ErrorCode::Config, "unknown key '" + key + "' in synthetic options", key);
  }
  o.validate();
  return o;
}

nlohmann::ordered_json encoder_json(const nnet::EncoderConfig& e) {
  return {{"input_dim", e.input_dim}, {"hidden_dim", e.hidden_dim}, {"num_hidden", e.num_hidden},
          {"embed_dim", e.embed_dim}, {"dropout", e.dropout}};
}

struct LogSink {
  std::mutex mutex;
  gs_log_fn fn = nullptr;
  void* user = nullptr;
};

LogSink& log_sink() {
  static LogSink sink;
  return sink;
}

void forward_warning(std::string_view message, void*) {
  auto& sink = log_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.fn) sink.fn(std::string(message).c_str(), sink.user);
}

}  // namespace

extern "C" {

const char* gs_version(void) { return "0.1.0"; }

const char* gs_status_string(gs_status status) {
  switch (status) {
    case GS_OK: return "OK";
    case GS_ERR_INTERNAL: return "Internal";
    default: break;
  }
  const int code = static_cast<int>(status);
  if (code >= 1 && code <= static_cast<int>(ErrorCode::Config))
    return to_string(static_cast<ErrorCode>(code)).data();
  return "Unknown";
}

const char* gs_last_error(void) { return g_last_error.c_str(); }
const char* gs_last_error_field(void) { return g_last_field.c_str(); }
void gs_free_string(char* s) { std::free(s); }

void gs_set_log_callback(gs_log_fn fn, void* user) {
  auto& sink = log_sink();
  {
    std::lock_guard lock(sink.mutex);
    sink.fn = fn;
    sink.user = user;
  }
  set_warning_sink(fn ? forward_warning : nullptr, nullptr);
}

int gs_feature_dim(const char* kind) {
  if (!kind) return -1;
  try {
    return feature_dim(parse_feature_kind(kind));
  } catch (...) {
    return -1;
  }
}

gs_status gs_joint_angles(const double keypoints[63], double out[20], uint32_t* degenerate_mask) {
  return guarded([&] {
    require(out, "out");
    const FeatureVector f = joint_angles(hand_from(keypoints));
    std::memcpy(out, f.values.data(), sizeof(double) * kNumAngles);
    if (degenerate_mask) *degenerate_mask = f.degenerate_angles;
  });
}

gs_status gs_features(const double keypoints[63], const char* kind, int normalize, double* out, size_t out_len) {
  return guarded([&] {
    require(kind, "kind");
    require(out, "out");
    const FeatureKind k = parse_feature_kind(kind);
    if (out_len < static_cast<size_t>(feature_dim(k)))
      throw Error(ErrorCode::Shape, "output buffer too small", "out_len");
    const FeatureVector f = make_features(hand_from(keypoints), k, normalize != 0);
    std::memcpy(out, f.values.data(), sizeof(double) * f.values.size());
  });
}

gs_status gs_random_transform(uint64_t seed, double rotation[9], double* scale, double translation[3]) {
  return guarded([&] {
    require(rotation, "rotation");
    require(scale, "scale");
    require(translation, "translation");
    const SimilarityTransform t = random_transform(seed);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rotation[3 * r + c] = t.rotation(r, c);
    *scale = t.scale;
    for (int i = 0; i < 3; ++i) translation[i] = t.translation(i);
  });
}

gs_status gs_apply_transform(const double keypoints[63], const double rotation[9], double scale,
                             const double translation[3], double out[63]) {
  return guarded([&] {
    require(rotation, "rotation");
    require(translation, "translation");
    require(out, "out");
    SimilarityTransform t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rotation[3 * r + c];
    t.scale = scale;
    t.translation = Eigen::Vector3d(translation[0], translation[1], translation[2]);
    if (!t.valid(1e-8)) throw Error(ErrorCode::InvalidArgument, "not a similarity transform", "rotation");
    const HandKeypoints h = apply_transform(hand_from(keypoints), t);
    std::memcpy(out, h.data(), sizeof(double) * kRawDim);
  });
}

gs_status gs_npy_load(const char* path, double out[63]) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const HandKeypoints h = load_keypoints(path);
    std::memcpy(out, h.data(), sizeof(double) * kRawDim);
  });
}

gs_status gs_npy_save(const char* path, const double keypoints[63]) {
  return guarded([&] {
    require(path, "path");
    write_keypoints(path, hand_from(keypoints));
  });
}

gs_status gs_dataset_open(const char* root, const char* name, gs_dataset** out) {
  return guarded([&] {
    require(root, "root");
    require(out, "out");
    *out = new gs_dataset{load_catalog(root, name ? name : "")};
  });
}

gs_status gs_dataset_synth(const char* options_json, const char* name, gs_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gs_dataset{synth::generate(synth_options(options_json), name ? name : "synthetic")};
  });
}

gs_status gs_synth_write(const char* options_json, const char* root, size_t* files_written) {
  return guarded([&] {
    require(root, "root");
    const size_t n = synth::write_tree(synth_options(options_json), root);
    if (files_written) *files_written = n;
  });
}

size_t gs_dataset_num_classes(const gs_dataset* d) { return d ? d->catalog.classes.size() : 0; }
size_t gs_dataset_num_samples(const gs_dataset* d) { return d ? d->catalog.samples.size() : 0; }
size_t gs_dataset_skipped_files(const gs_dataset* d) { return d ? d->catalog.skipped_files : 0; }

const char* gs_dataset_class_name(const gs_dataset* d, size_t class_id) {
  if (!d || class_id >= d->catalog.classes.size()) return nullptr;
  return d->catalog.classes[class_id].c_str();
}

void gs_dataset_free(gs_dataset* d) { delete d; }

gs_status gs_split_create(const gs_dataset* dataset, double fraction, uint64_t seed, gs_split** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    *out = new gs_split{stratified_split(dataset->catalog, fraction, seed)};
  });
}

gs_status gs_split_load(const char* path, const gs_dataset* dataset, gs_split** out) {
  return guarded([&] {
    require(path, "path");
    require(dataset, "dataset");
    require(out, "out");
    *out = new gs_split{load_split(path, dataset->catalog)};
  });
}

gs_status gs_split_save(const gs_split* split, const char* path) {
  return guarded([&] {
    require(split, "split");
    require(path, "path");
    save_split(split->split, path);
  });
}

gs_status gs_split_to_json(const gs_split* split, char** out_json) {
  return guarded([&] {
    require(split, "split");
    require(out_json, "out_json");
    *out_json = dup_string(split_to_json(split->split));
  });
}

void gs_split_free(gs_split* split) { delete split; }

gs_status gs_config_default(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(config_to_json(default_config()).dump(2) + "\n");
  });
}

gs_status gs_config_resolve(const char* config_json, char** out_json) {
  return guarded([&] {
    require(config_json, "json");
    require(out_json, "out_json");
    *out_json = dup_string(config_to_json(parse_config(config_json)).dump(2) + "\n");
  });
}

gs_status gs_parameter_count(int input_dim, const char* encoder_json, uint64_t* out) {
  return guarded([&] {
    require(out, "out");
    nnet::EncoderConfig e = default_config().encoder;
    if (encoder_json) {
      json doc = {{"schema_version", kConfigSchemaVersion}, {"encoder", json::parse(encoder_json)}};
      e = config_from_json(doc).encoder;
    }
    e.input_dim = input_dim;
    e.validate();
    *out = nnet::expected_parameter_count(e);
  });
}

gs_status gs_model_load(const char* path, gs_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new_model(nnet::load_checkpoint(path));
  });
}

gs_status gs_model_save(const gs_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    nnet::save_checkpoint(model->checkpoint, path);
  });
}

gs_status gs_model_info(const gs_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    nlohmann::ordered_json j;
    j["encoder"] = encoder_json(model->checkpoint.encoder);
    j["metadata"] = model->checkpoint.metadata;
    j["parameter_count"] = nnet::expected_parameter_count(model->checkpoint.encoder);
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

gs_status gs_model_embed(const gs_model* model, const double* x, size_t rows, size_t cols, double* out,
                         size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    require(out, "out");
    const auto& e = model->checkpoint.encoder;
    if (cols != static_cast<size_t>(e.input_dim))
      throw Error(ErrorCode::Shape, "input width differs from the encoder's", "cols");
    if (out_len < rows * static_cast<size_t>(e.embed_dim))
      throw Error(ErrorCode::Shape, "output buffer too small", "out_len");
    const Eigen::MatrixXd input = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                 Eigen::RowMajor>>(
        x, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto encoder = nnet::encoder_from_checkpoint(model->checkpoint);
    const Eigen::MatrixXd emb = encoder.forward_eval(input);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out, emb.rows(), emb.cols()) = emb;
  });
}

void gs_model_free(gs_model* model) { delete model; }

gs_status gs_train(const gs_dataset* dataset, const gs_split* split, const char* config_json, gs_model** out,
                   char** log_jsonl) {
  return guarded([&] {
    require(out, "out");
    const RunConfig config = config_from(config_json);
    const auto result = pipeline::train_within_domain(side(dataset, split, true, config.features), config);
    put_string(log_jsonl, pipeline::training_log_jsonl(result.log));
    *out = new_model(result.checkpoint);
  });
}

gs_status gs_pretrain(const gs_dataset* source, const gs_split* split, const char* config_json, gs_model** out,
                      char** log_jsonl) {
  return guarded([&] {
    require(out, "out");
    const RunConfig config = config_from(config_json);
    const auto result =
        pipeline::pretrain_source(side(source, split, true, config.features), config, source->catalog.name);
    put_string(log_jsonl, pipeline::training_log_jsonl(result.log));
    *out = new_model(result.checkpoint);
  });
}

gs_status gs_adapt(const gs_model* model, const gs_dataset* target, const gs_split* split, const char* mode,
                   const char* config_json, gs_model** out, char** log_jsonl) {
  return guarded([&] {
    require(model, "model");
    require(mode, "mode");
    require(out, "out");
    const RunConfig config = config_from(config_json);
    const auto result = pipeline::adapt(model->checkpoint, side(target, split, true, features_for(model, config, config_json)),
                                        pipeline::parse_adapt_mode(mode), config);
    put_string(log_jsonl, pipeline::training_log_jsonl(result.log));
    *out = new_model(result.checkpoint);
  });
}

gs_status gs_evaluate(const gs_model* model, const gs_dataset* dataset, const gs_split* split,
                      const char* config_json, const char* mode, char** report_json) {
  return guarded([&] {
    require(report_json, "report_json");
    const RunConfig config = config_from(config_json);
    const FeatureTable test = side(dataset, split, false, features_for(model, config, config_json));
    std::optional<nnet::Encoder> encoder;
    if (model) {
      pipeline::check_compatible(model->checkpoint, test);
      encoder = nnet::encoder_from_checkpoint(model->checkpoint);
    }
    const auto report =
        eval::evaluate(encoder ? &*encoder : nullptr, test, config.eval, mode ? mode : "within_domain");
    *report_json = dup_string(eval::report_json_text(report));
  });
}

gs_status gs_baseline(const char* kind, const gs_model* model, const gs_dataset* dataset, const gs_split* split,
                      const char* config_json, char** result_json) {
  return guarded([&] {
    require(kind, "kind");
    require(result_json, "result_json");
    const RunConfig config = config_from(config_json);
    const std::string k = kind;
    if (k == "input_space") {
      const auto report = eval::input_space_baseline(side(dataset, split, false, config.features), config.eval);
      *result_json = dup_string(eval::report_json_text(report));
    } else if (k == "episode_linear") {
      require(model, "model");
      const FeatureTable test = side(dataset, split, false, features_for(model, config, config_json));
      pipeline::check_compatible(model->checkpoint, test);
      const auto encoder = nnet::encoder_from_checkpoint(model->checkpoint);
      *result_json = dup_string(eval::report_json_text(eval::episode_linear_baseline(encoder, test, config.eval)));
    } else if (k == "full_data_linear") {
      const double acc = eval::full_data_linear(side(dataset, split, true, config.features),
                                                side(dataset, split, false, config.features));
      nlohmann::ordered_json j;
      j["method"] = "full_data_linear";
      j["dataset"] = dataset->catalog.name;
      j["representation"] = std::string(to_string(config.features.kind));
      j["accuracy"] = acc;
      *result_json = dup_string(j.dump(2) + "\n");
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown baseline '" + k + "'", "kind");
    }
  });
}

gs_status gs_ablate(const gs_dataset* dataset, const gs_split* split, const char* config_json, int trained,
                    char** table_json, char** csv_long, char** csv_wide) {
  return guarded([&] {
    require(dataset, "dataset");
    require(split, "split");
    require(table_json, "table_json");
    const RunConfig config = config_from(config_json);
    const auto table =
        eval::ablation_normalization(dataset->catalog, split->split, config.eval, trained ? &config : nullptr);
    *table_json = dup_string(eval::ablation_to_json(table).dump(2) + "\n");
    put_string(csv_long, eval::ablation_to_csv(table));
    put_string(csv_wide, eval::ablation_to_wide_csv(table));
  });
}

gs_status gs_multiseed(const gs_model* model, const gs_dataset* dataset, const gs_split* split,
                       const char* config_json, const uint64_t* seeds, size_t num_seeds, int retrain,
                       char** result_json) {
  return guarded([&] {
    require(result_json, "result_json");
    const RunConfig config = config_from(config_json);
    std::vector<std::uint64_t> seed_list =
        seeds ? std::vector<std::uint64_t>(seeds, seeds + num_seeds) : eval::kDefaultSeeds;
    if (seed_list.empty()) throw Error(ErrorCode::InvalidArgument, "no seeds given", "seeds");
    const FeatureOptions options = retrain ? config.features : features_for(model, config, config_json);
    const FeatureTable test = side(dataset, split, false, options);
    std::optional<FeatureTable> train;
    if (retrain) train = side(dataset, split, true, options);
    std::optional<nnet::Encoder> fixed;
    if (model && !retrain) {
      pipeline::check_compatible(model->checkpoint, test);
      fixed = nnet::encoder_from_checkpoint(model->checkpoint);
    }
    std::vector<eval::EvalReport> reports;
    const auto summary = eval::multi_seed(
        [&](std::uint64_t seed) {
          RunConfig c = config;
          c.eval.seed = seed;
          eval::EvalReport r;
          if (retrain) {
            c.init_seed = seed;
            c.train.seed = seed;
            const auto enc = nnet::encoder_from_checkpoint(pipeline::train_within_domain(*train, c).checkpoint);
            r = eval::evaluate(&enc, test, c.eval);
          } else {
            r = eval::evaluate(fixed ? &*fixed : nullptr, test, c.eval);
          }
          reports.push_back(r);
          return r;
        },
        seed_list);
    nlohmann::ordered_json j = eval::multi_seed_to_json(summary);
    j["retrain"] = retrain != 0;
    auto per_run = nlohmann::ordered_json::array();
    for (const auto& r : reports) per_run.push_back(eval::report_to_json(r));
    j["reports"] = std::move(per_run);
    *result_json = dup_string(j.dump(2) + "\n");
  });
}

gs_status gs_error_analysis(const char* report_json, char** out_json) {
  return guarded([&] {
    require(report_json, "report_json");
    require(out_json, "out_json");
    const auto report = eval::report_from_json(nlohmann::ordered_json::parse(report_json));
    *out_json = dup_string(eval::error_analysis_to_json(eval::error_analysis(report), report.class_names).dump(2) +
                           "\n");
  });
}

gs_status gs_reports_csv(const char* const* report_jsons, size_t count, char** out_csv) {
  return guarded([&] {
    require(out_csv, "out_csv");
    if (count) require(report_jsons, "report_jsons");
    std::vector<eval::EvalReport> reports;
    for (size_t i = 0; i < count; ++i) {
      require(report_jsons[i], "report_jsons[i]");
      reports.push_back(eval::report_from_json(nlohmann::ordered_json::parse(report_jsons[i])));
    }
    *out_csv = dup_string(eval::reports_to_csv(reports));
  });
}

}  // extern "C"
