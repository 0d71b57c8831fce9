#ifndef GEOMSHOT_GEOMSHOT_H
#define GEOMSHOT_GEOMSHOT_H

/*
 * C interface to the geomshot library.
 *
 * Every fallible call returns a gs_status. On failure, gs_last_error() and
 * gs_last_error_field() describe the error; both are per-thread and remain
 * valid until the next failing call on that thread.
 *
 * Strings returned through `char**` out-parameters are owned by the caller
 * and released with gs_free_string(). Handles are released with their
 * matching *_free function; passing NULL to any *_free is a no-op.
 *
 * Keypoint arrays are 63 doubles: 21 landmarks x (x, y, z), row-major.
 * Configuration is passed as JSON text (NULL selects the defaults); see
 * gs_config_default() for the full document.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GEOMSHOT_BUILDING_LIBRARY)
#    define GS_API __declspec(dllexport)
#  else
#    define GS_API __declspec(dllimport)
#  endif
#else
#  define GS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gs_status {
  GS_OK = 0,
  GS_ERR_INVALID_ARGUMENT = 1,
  GS_ERR_INVALID_KEYPOINTS = 2,
  GS_ERR_DEGENERATE_HAND = 3,
  GS_ERR_FORMAT = 4,
  GS_ERR_IO = 5,
  GS_ERR_INSUFFICIENT_CLASSES = 6,
  GS_ERR_INSUFFICIENT_SAMPLES = 7,
  GS_ERR_BATCH_TOO_SMALL = 8,
  GS_ERR_CACHE = 9,
  GS_ERR_NON_FINITE_GRADIENT = 10,
  GS_ERR_CORRUPT_CHECKPOINT = 11,
  GS_ERR_SHAPE = 12,
  GS_ERR_NO_POSITIVES = 13,
  GS_ERR_CONFIG_MISMATCH = 14,
  GS_ERR_DEGENERATE_PROBLEM = 15,
  GS_ERR_SPLIT = 16,
  GS_ERR_CONFIG = 17,
  GS_ERR_INTERNAL = 99
} gs_status;

typedef struct gs_dataset gs_dataset;
typedef struct gs_split gs_split;
typedef struct gs_model gs_model;

typedef void (*gs_log_fn)(const char* message, void* user);

/* ---- library ---------------------------------------------------------- */

GS_API const char* gs_version(void);
GS_API const char* gs_status_string(gs_status status);
GS_API const char* gs_last_error(void);
GS_API const char* gs_last_error_field(void);
GS_API void gs_free_string(char* s);
/* Routes warnings (skipped files, dropped samples, ...) to `fn`; NULL
 * restores the default stderr sink. */
GS_API void gs_set_log_callback(gs_log_fn fn, void* user);

/* ---- geometry ---------------------------------------------------------- */

/* "raw" -> 63, "angle" -> 20, "raw_angle" -> 83, anything else -> -1. */
GS_API int gs_feature_dim(const char* kind);
GS_API gs_status gs_joint_angles(const double keypoints[63], double out[20], uint32_t* degenerate_mask);
/* Writes gs_feature_dim(kind) values; out_len must be at least that. */
GS_API gs_status gs_features(const double keypoints[63], const char* kind, int normalize, double* out,
                             size_t out_len);
/* Rotation is row-major 3x3. */
GS_API gs_status gs_random_transform(uint64_t seed, double rotation[9], double* scale,
                                     double translation[3]);
GS_API gs_status gs_apply_transform(const double keypoints[63], const double rotation[9], double scale,
                                    const double translation[3], double out[63]);

/* ---- NPY --------------------------------------------------------------- */

GS_API gs_status gs_npy_load(const char* path, double out[63]);
GS_API gs_status gs_npy_save(const char* path, const double keypoints[63]);

/* ---- datasets and splits ---------------------------------------------- */

/* Reads <root>/<class>/*.npy. `name` may be NULL (directory name is used). */
GS_API gs_status gs_dataset_open(const char* root, const char* name, gs_dataset** out);
/* Synthetic corpus in memory. options_json keys: classes, per_class, noise,
 * bone_jitter, transforms, seed. */
GS_API gs_status gs_dataset_synth(const char* options_json, const char* name, gs_dataset** out);
/* Writes the synthetic corpus as an NPY tree. */
GS_API gs_status gs_synth_write(const char* options_json, const char* root, size_t* files_written);
GS_API size_t gs_dataset_num_classes(const gs_dataset* dataset);
GS_API size_t gs_dataset_num_samples(const gs_dataset* dataset);
GS_API size_t gs_dataset_skipped_files(const gs_dataset* dataset);
GS_API const char* gs_dataset_class_name(const gs_dataset* dataset, size_t class_id);
GS_API void gs_dataset_free(gs_dataset* dataset);

GS_API gs_status gs_split_create(const gs_dataset* dataset, double fraction, uint64_t seed, gs_split** out);
/* Loads and validates against `dataset`. */
GS_API gs_status gs_split_load(const char* path, const gs_dataset* dataset, gs_split** out);
GS_API gs_status gs_split_save(const gs_split* split, const char* path);
GS_API gs_status gs_split_to_json(const gs_split* split, char** out_json);
GS_API void gs_split_free(gs_split* split);

/* ---- configuration ----------------------------------------------------- */

GS_API gs_status gs_config_default(char** out_json);
/* Validates `json` and returns it with every default filled in. */
GS_API gs_status gs_config_resolve(const char* json, char** out_json);

/* ---- models ------------------------------------------------------------ */

/* Model-bound calls take the representation from config_json when it is
 * given (a checkpoint built for another representation fails with
 * GS_ERR_CONFIG_MISMATCH) and from the checkpoint when config_json is NULL. */

/* Trainable parameter count of the encoder described by encoder_json (NULL:
 * defaults) at the given input width. */
GS_API gs_status gs_parameter_count(int input_dim, const char* encoder_json, uint64_t* out);
GS_API gs_status gs_model_load(const char* path, gs_model** out);
GS_API gs_status gs_model_save(const gs_model* model, const char* path);
/* {"encoder": {...}, "metadata": {...}, "parameter_count": n} */
GS_API gs_status gs_model_info(const gs_model* model, char** out_json);
/* Eval-mode embedding of `rows` row-major inputs of width `cols`; writes
 * rows * embed_dim values. */
GS_API gs_status gs_model_embed(const gs_model* model, const double* x, size_t rows, size_t cols, double* out,
                                size_t out_len);
GS_API void gs_model_free(gs_model* model);

/* Episodic training on the split's train side. log_jsonl (nullable) receives
 * one JSON line per epoch. */
GS_API gs_status gs_train(const gs_dataset* dataset, const gs_split* split, const char* config_json,
                          gs_model** out, char** log_jsonl);
/* Training on a source corpus; the model is tagged with the dataset name. */
GS_API gs_status gs_pretrain(const gs_dataset* source, const gs_split* split, const char* config_json,
                             gs_model** out, char** log_jsonl);
/* mode: "frozen" (returns a copy) or "target_supervised" (projection-only
 * fine-tuning on the target train side). */
GS_API gs_status gs_adapt(const gs_model* model, const gs_dataset* target, const gs_split* split,
                          const char* mode, const char* config_json, gs_model** out, char** log_jsonl);

/* ---- evaluation -------------------------------------------------------- */

/* Episodic evaluation on the split's test side. With model == NULL the
 * features are compared directly (input-space baseline). `mode` is a
 * label echoed into the report (NULL: "within_domain"). */
GS_API gs_status gs_evaluate(const gs_model* model, const gs_dataset* dataset, const gs_split* split,
                             const char* config_json, const char* mode, char** report_json);
/* kind: "input_space", "episode_linear" (needs a model) or
 * "full_data_linear" (returns {"accuracy": a}). */
GS_API gs_status gs_baseline(const char* kind, const gs_model* model, const gs_dataset* dataset,
                             const gs_split* split, const char* config_json, char** result_json);
/* Normalisation ablation over K = 1, 3, 5. trained != 0 trains one encoder
 * per setting. csv_long and csv_wide are nullable. */
GS_API gs_status gs_ablate(const gs_dataset* dataset, const gs_split* split, const char* config_json,
                           int trained, char** table_json, char** csv_long, char** csv_wide);
/* Repeats the evaluation per seed (NULL seeds: 42, 1337, 2024). With
 * retrain != 0 each seed also sets the init and training seeds and a fresh
 * encoder is trained; otherwise `model` (nullable) is evaluated. */
GS_API gs_status gs_multiseed(const gs_model* model, const gs_dataset* dataset, const gs_split* split,
                              const char* config_json, const uint64_t* seeds, size_t num_seeds, int retrain,
                              char** result_json);
GS_API gs_status gs_error_analysis(const char* report_json, char** out_json);
/* CSV table (dataset,repr,encoder,mode,K,mean,ci95) over report JSONs. */
GS_API gs_status gs_reports_csv(const char* const* report_jsons, size_t count, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* GEOMSHOT_GEOMSHOT_H */
