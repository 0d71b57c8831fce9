// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geomshot/geomshot.h"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Failure {
  int status;
  std::string message;
};

void check(gs_status status) {
  if (status != GS_OK) throw Failure{static_cast<int>(status), gs_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { gs_free_string(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) {
  OwnedString owned(s);
  return s ? std::string(s) : std::string();
}

struct DatasetDeleter {
  void operator()(gs_dataset* d) const { gs_dataset_free(d); }
};
struct SplitDeleter {
  void operator()(gs_split* s) const { gs_split_free(s); }
};
struct ModelDeleter {
  void operator()(gs_model* m) const { gs_model_free(m); }
};
using Dataset = std::unique_ptr<gs_dataset, DatasetDeleter>;
using Split = std::unique_ptr<gs_split, SplitDeleter>;
using Model = std::unique_ptr<gs_model, ModelDeleter>;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{GS_ERR_IO, "cannot read " + path.string()};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{GS_ERR_IO, "cannot write " + path.string()};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string compact_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// Options shared by the run-producing commands.
struct Common {
  std::string config_path;
  std::string data_root;
  std::string dataset_name;
  std::string split_path;
  double split_fraction = 0.7;
  std::uint64_t split_seed = 42;
  std::string out = "runs";
  std::string run_id;
  std::string checkpoint;
};

struct Run {
  std::string command;
  std::vector<std::string> argv;
  fs::path dir;
  ordered_json manifest;
  std::vector<std::string> outputs;

  void write(const std::string& rel, const std::string& text) {
    write_text(dir / rel, text);
    outputs.push_back(rel);
  }
};

Run open_run(const std::string& command, const Common& c, const std::vector<std::string>& argv) {
  Run run;
  run.command = command;
  run.argv = argv;
  std::string id = c.run_id;
  if (id.empty()) {
    std::random_device rd;
    char suffix[8];
    std::snprintf(suffix, sizeof suffix, "%04x", rd() & 0xffffu);
    id = command + "-" + compact_now() + "-" + suffix;
  }
  run.dir = fs::path(c.out) / id;
  if (fs::exists(run.dir / "manifest.json"))
    throw Failure{GS_ERR_INVALID_ARGUMENT, "run directory " + run.dir.string() + " already holds a run"};
  fs::create_directories(run.dir);
  run.manifest["command"] = command;
  run.manifest["argv"] = argv;
  run.manifest["version"] = gs_version();
  run.manifest["run_id"] = id;
  run.manifest["output_dir"] = run.dir.string();
  run.manifest["started_at"] = utc_now();
  return run;
}

// Re-reads every JSON output so a truncated or malformed file fails the run.
void validate_outputs(const fs::path& dir, const std::vector<std::string>& outputs) {
  for (const auto& rel : outputs) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) throw Failure{GS_ERR_IO, "missing output " + p.string()};
    if (p.extension() == ".json") {
      if (!nlohmann::json::accept(read_text(p)))
        throw Failure{GS_ERR_FORMAT, "output " + p.string() + " is not valid JSON"};
    }
  }
}

void close_run(Run& run) {
  validate_outputs(run.dir, run.outputs);
  run.manifest["finished_at"] = utc_now();
  run.manifest["outputs"] = run.outputs;
  run.manifest["status"] = "ok";
  write_text(run.dir / "manifest.json", run.manifest.dump(2) + "\n");
  std::cout << run.dir.string() << "\n";
}

// Resolved config text (defaults filled in) plus its JSON form.
std::pair<std::string, ordered_json> load_config(const std::string& path) {
  char* text = nullptr;
  if (path.empty()) {
    check(gs_config_default(&text));
  } else {
    const std::string raw = read_text(path);
    check(gs_config_resolve(raw.c_str(), &text));
  }
  std::string resolved = take(text);
  return {resolved, ordered_json::parse(resolved)};
}

void record_config(Run& run, const Common& c, const ordered_json& config) {
  run.manifest["config_path"] = c.config_path.empty() ? nullptr : ordered_json(c.config_path);
  run.manifest["config"] = config;
  run.manifest["seed"] = config["train"]["seed"];
}

Dataset open_dataset(const Common& c) {
  if (c.data_root.empty()) throw Failure{GS_ERR_INVALID_ARGUMENT, "--data-root is required"};
  gs_dataset* d = nullptr;
  check(gs_dataset_open(c.data_root.c_str(), c.dataset_name.empty() ? nullptr : c.dataset_name.c_str(), &d));
  return Dataset(d);
}

// Loads --split, or derives one and stores it in the run directory.
Split open_split(const Common& c, const gs_dataset* dataset, Run& run) {
  gs_split* s = nullptr;
  if (!c.split_path.empty()) {
    check(gs_split_load(c.split_path.c_str(), dataset, &s));
    run.manifest["split"] = c.split_path;
    return Split(s);
  }
  check(gs_split_create(dataset, c.split_fraction, c.split_seed, &s));
  Split split(s);
  char* text = nullptr;
  check(gs_split_to_json(split.get(), &text));
  run.write("split.json", take(text));
  run.manifest["split"] = (run.dir / "split.json").string();
  return split;
}

Model open_model(const std::string& path) {
  gs_model* m = nullptr;
  check(gs_model_load(path.c_str(), &m));
  return Model(m);
}

void save_model(Run& run, const gs_model* model, const std::string& name) {
  const std::string rel = "checkpoints/" + name;
  fs::create_directories(run.dir / "checkpoints");
  check(gs_model_save(model, (run.dir / rel).string().c_str()));
  run.outputs.push_back(rel);
}

void add_common(CLI::App* cmd, Common& c, bool needs_data = true) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  if (needs_data) {
    cmd->add_option("--data-root", c.data_root, "Dataset root holding <class>/*.npy")->required();
    cmd->add_option("--dataset-name", c.dataset_name, "Dataset label (default: directory name)");
    cmd->add_option("--split", c.split_path, "Split JSON; derived from --split-seed when absent")
        ->check(CLI::ExistingFile);
    cmd->add_option("--split-fraction", c.split_fraction, "Train fraction for a derived split")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--split-seed", c.split_seed, "Seed for a derived split");
  }
  cmd->add_option("--out", c.out, "Directory receiving <run-id>/")->capture_default_str();
  cmd->add_option("--run-id", c.run_id, "Run directory name (default: <command>-<utc time>-<hex>)");
}

std::string report_csv(const std::vector<std::string>& reports) {
  std::vector<const char*> ptrs;
  for (const auto& r : reports) ptrs.push_back(r.c_str());
  char* csv = nullptr;
  check(gs_reports_csv(ptrs.data(), ptrs.size(), &csv));
  return take(csv);
}

struct SynthArgs {
  int classes = 10;
  int per_class = 200;
  double noise = 0.05;
  double bone_jitter = 0.03;
  bool transforms = true;
  std::uint64_t seed = 42;
  std::string out;
};

struct SplitArgs {
  std::string data_root;
  std::string dataset_name;
  std::string out;
  double fraction = 0.7;
  std::uint64_t seed = 42;
};

int dispatch(const std::vector<std::string>& args);

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  ordered_json options;
  options["classes"] = a.classes;
  options["per_class"] = a.per_class;
  options["noise"] = a.noise;
  options["bone_jitter"] = a.bone_jitter;
  options["transforms"] = a.transforms;
  options["seed"] = a.seed;
  const std::string started = utc_now();
  size_t written = 0;
  check(gs_synth_write(options.dump().c_str(), a.out.c_str(), &written));
  ordered_json m;
  m["command"] = "synth";
  m["argv"] = argv;
  m["version"] = gs_version();
  m["options"] = options;
  m["output_dir"] = a.out;
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["seed"] = a.seed;
  m["files"] = written;
  m["status"] = "ok";
  write_text(fs::path(a.out) / "manifest.json", m.dump(2) + "\n");
  std::cout << a.out << " (" << written << " files)\n";
  return 0;
}

int run_split(const SplitArgs& a, const std::vector<std::string>& argv) {
  const std::string started = utc_now();
  gs_dataset* d = nullptr;
  check(gs_dataset_open(a.data_root.c_str(), a.dataset_name.empty() ? nullptr : a.dataset_name.c_str(), &d));
  Dataset dataset(d);
  gs_split* s = nullptr;
  check(gs_split_create(dataset.get(), a.fraction, a.seed, &s));
  Split split(s);
  check(gs_split_save(split.get(), a.out.c_str()));
  gs_split* reloaded = nullptr;
  check(gs_split_load(a.out.c_str(), dataset.get(), &reloaded));
  gs_split_free(reloaded);
  fs::path manifest_path = a.out;
  manifest_path.replace_extension(".manifest.json");
  ordered_json m;
  m["command"] = "split";
  m["argv"] = argv;
  m["version"] = gs_version();
  m["data_root"] = a.data_root;
  m["output"] = a.out;
  m["fraction"] = a.fraction;
  m["seed"] = a.seed;
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["status"] = "ok";
  write_text(manifest_path, m.dump(2) + "\n");
  std::cout << a.out << "\n";
  return 0;
}

int run_replay(const std::string& manifest_path, const std::string& out, const std::string& run_id) {
  const auto manifest = nlohmann::json::parse(read_text(manifest_path));
  auto argv = manifest.at("argv").get<std::vector<std::string>>();
  if (argv.size() < 2) throw Failure{GS_ERR_FORMAT, "manifest argv is empty"};
  std::vector<std::string> args;
  for (std::size_t i = 1; i < argv.size(); ++i) {
    const std::string& a = argv[i];
    const bool takes_value = a == "--config" || a == "--run-id" || a == "--out";
    if (takes_value) {
      ++i;
      continue;
    }
    if (a.rfind("--config=", 0) == 0 || a.rfind("--run-id=", 0) == 0 || a.rfind("--out=", 0) == 0) continue;
    args.push_back(a);
  }
  if (manifest.contains("config")) {
    const fs::path snapshot = fs::temp_directory_path() / ("geomshot-replay-" + compact_now() + ".json");
    write_text(snapshot, manifest.at("config").dump(2) + "\n");
    args.push_back("--config");
    args.push_back(snapshot.string());
  }
  if (manifest.at("command") != "synth" && manifest.at("command") != "split") {
    args.push_back("--out");
    args.push_back(out);
    if (!run_id.empty()) {
      args.push_back("--run-id");
      args.push_back(run_id);
    }
  }
  args.insert(args.begin(), argv.front());
  return dispatch(args);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"geomshot: geometry-invariant few-shot hand-gesture recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gs_version());

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic NPY dataset tree");
  c_synth->add_option("--classes", synth.classes)->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--per-class", synth.per_class)->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--noise", synth.noise, "Angular noise (radians)")->capture_default_str();
  c_synth->add_option("--bone-jitter", synth.bone_jitter, "Relative bone-length noise")->capture_default_str();
  c_synth->add_flag("--transforms,!--no-transforms", synth.transforms, "Random similarity transform per sample");
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--out", synth.out, "Dataset root to create")->required();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Write a stratified train/test split");
  c_split->add_option("--data-root", split.data_root)->required()->check(CLI::ExistingDirectory);
  c_split->add_option("--dataset-name", split.dataset_name);
  c_split->add_option("--out", split.out, "Split JSON path")->required();
  c_split->add_option("--fraction", split.fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_split->add_option("--seed", split.seed)->capture_default_str();

  Common train_c;
  auto* c_train = app.add_subcommand("train", "Episodic training on the train side of a split");
  add_common(c_train, train_c);

  Common pre_c;
  auto* c_pre = app.add_subcommand("pretrain", "Episodic training on a source corpus");
  add_common(c_pre, pre_c);

  Common adapt_c;
  std::string adapt_mode = "frozen";
  auto* c_adapt = app.add_subcommand("adapt", "Adapt a pretrained checkpoint to a target corpus");
  add_common(c_adapt, adapt_c);
  c_adapt->add_option("--checkpoint", adapt_c.checkpoint)->required()->check(CLI::ExistingFile);
  c_adapt->add_option("--mode", adapt_mode)
      ->check(CLI::IsMember({"frozen", "target_supervised"}))
      ->capture_default_str();

  Common eval_c;
  std::string eval_mode;
  auto* c_eval = app.add_subcommand("eval", "Episodic evaluation on the test side of a split");
  add_common(c_eval, eval_c);
  c_eval->add_option("--checkpoint", eval_c.checkpoint, "Encoder; input-space comparison when absent")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--mode", eval_mode, "Label recorded in the report (within_domain, frozen, ...)");

  Common base_c;
  std::string base_kind = "input_space";
  auto* c_base = app.add_subcommand("baseline", "Input-space, episode-linear or full-data linear baselines");
  add_common(c_base, base_c);
  c_base->add_option("--kind", base_kind)
      ->check(CLI::IsMember({"input_space", "episode_linear", "full_data_linear"}))
      ->capture_default_str();
  c_base->add_option("--checkpoint", base_c.checkpoint)->check(CLI::ExistingFile);

  Common abl_c;
  bool abl_trained = false;
  auto* c_abl = app.add_subcommand("ablate", "Normalisation ablation at K = 1, 3, 5");
  add_common(c_abl, abl_c);
  c_abl->add_flag("--trained", abl_trained, "Train an encoder per setting instead of comparing inputs");

  Common ms_c;
  std::vector<std::uint64_t> ms_seeds = {42, 1337, 2024};
  bool ms_retrain = false;
  auto* c_ms = app.add_subcommand("multiseed", "Repeat an evaluation across seeds");
  add_common(c_ms, ms_c);
  c_ms->add_option("--seeds", ms_seeds)->delimiter(',')->capture_default_str();
  c_ms->add_flag("--retrain", ms_retrain, "Train a fresh encoder per seed");
  c_ms->add_option("--checkpoint", ms_c.checkpoint)->check(CLI::ExistingFile);

  Common exp_c;
  std::vector<std::string> exp_inputs;
  auto* c_exp = app.add_subcommand("export", "Collect report JSON files into one CSV table");
  add_common(c_exp, exp_c, false);
  c_exp->add_option("inputs", exp_inputs, "report.json files")->required()->check(CLI::ExistingFile);

  auto* c_cfg = app.add_subcommand("config", "Print the default configuration");
  std::string cfg_check;
  c_cfg->add_option("--check", cfg_check, "Validate a config file and print it resolved")
      ->check(CLI::ExistingFile);

  std::string info_path;
  auto* c_info = app.add_subcommand("info", "Describe a checkpoint");
  c_info->add_option("checkpoint", info_path)->required()->check(CLI::ExistingFile);

  std::string replay_manifest;
  std::string replay_out = "runs";
  std::string replay_id;
  auto* c_replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  c_replay->add_option("manifest", replay_manifest)->required()->check(CLI::ExistingFile);
  c_replay->add_option("--out", replay_out)->capture_default_str();
  c_replay->add_option("--run-id", replay_id);

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (c_synth->parsed()) return run_synth(synth, args);
  if (c_split->parsed()) return run_split(split, args);
  if (c_replay->parsed()) return run_replay(replay_manifest, replay_out, replay_id);

  if (c_cfg->parsed()) {
    const auto [text, _] = load_config(cfg_check);
    std::cout << text;
    return 0;
  }
  if (c_info->parsed()) {
    Model m = open_model(info_path);
    char* text = nullptr;
    check(gs_model_info(m.get(), &text));
    std::cout << take(text);
    return 0;
  }

  if (c_train->parsed() || c_pre->parsed()) {
    const bool pre = c_pre->parsed();
    const Common& c = pre ? pre_c : train_c;
    const auto [config, config_json] = load_config(c.config_path);
    Run run = open_run(pre ? "pretrain" : "train", c, args);
    record_config(run, c, config_json);
    Dataset dataset = open_dataset(c);
    Split split = open_split(c, dataset.get(), run);
    gs_model* m = nullptr;
    char* log = nullptr;
    check(pre ? gs_pretrain(dataset.get(), split.get(), config.c_str(), &m, &log)
              : gs_train(dataset.get(), split.get(), config.c_str(), &m, &log));
    Model model(m);
    run.write("training_log.jsonl", take(log));
    save_model(run, model.get(), "model.ckpt");
    close_run(run);
    return 0;
  }

  if (c_adapt->parsed()) {
    const auto [config, config_json] = load_config(adapt_c.config_path);
    Run run = open_run("adapt", adapt_c, args);
    record_config(run, adapt_c, config_json);
    run.manifest["checkpoint"] = adapt_c.checkpoint;
    run.manifest["mode"] = adapt_mode;
    Model source = open_model(adapt_c.checkpoint);
    Dataset dataset = open_dataset(adapt_c);
    Split split = open_split(adapt_c, dataset.get(), run);
    gs_model* m = nullptr;
    char* log = nullptr;
    check(gs_adapt(source.get(), dataset.get(), split.get(), adapt_mode.c_str(), config.c_str(), &m, &log));
    Model adapted(m);
    run.write("training_log.jsonl", take(log));
    save_model(run, adapted.get(), "model.ckpt");
    close_run(run);
    return 0;
  }

  if (c_eval->parsed() || c_base->parsed() || c_ms->parsed() || c_abl->parsed()) {
    const std::string name = c_eval->parsed() ? "eval" : c_base->parsed() ? "baseline" : c_ms->parsed() ? "multiseed" : "ablate";
    const Common& c = c_eval->parsed() ? eval_c : c_base->parsed() ? base_c : c_ms->parsed() ? ms_c : abl_c;
    const auto [config, config_json] = load_config(c.config_path);
    Run run = open_run(name, c, args);
    record_config(run, c, config_json);
    run.manifest["seed"] = config_json["eval"]["seed"];
    Dataset dataset = open_dataset(c);
    Split split = open_split(c, dataset.get(), run);
    Model model;
    if (!c.checkpoint.empty()) {
      model = open_model(c.checkpoint);
      run.manifest["checkpoint"] = c.checkpoint;
    }
    char* out = nullptr;
    if (c_eval->parsed()) {
      const char* mode = eval_mode.empty() ? (model ? "within_domain" : "input_space") : eval_mode.c_str();
      check(gs_evaluate(model.get(), dataset.get(), split.get(), config.c_str(), mode, &out));
      const std::string report = take(out);
      run.write("report.json", report);
      run.write("tables/results.csv", report_csv({report}));
      check(gs_error_analysis(report.c_str(), &out));
      run.write("error_analysis.json", take(out));
    } else if (c_base->parsed()) {
      if (base_kind == "episode_linear" && !model)
        throw Failure{GS_ERR_INVALID_ARGUMENT, "--kind episode_linear needs --checkpoint"};
      check(gs_baseline(base_kind.c_str(), model.get(), dataset.get(), split.get(), config.c_str(), &out));
      const std::string result = take(out);
      run.write("report.json", result);
      if (base_kind != "full_data_linear") run.write("tables/results.csv", report_csv({result}));
    } else if (c_ms->parsed()) {
      check(gs_multiseed(model.get(), dataset.get(), split.get(), config.c_str(), ms_seeds.data(), ms_seeds.size(),
                         ms_retrain ? 1 : 0, &out));
      const std::string result = take(out);
      run.write("report.json", result);
      std::vector<std::string> reports;
      const auto parsed = nlohmann::json::parse(result);
      for (const auto& r : parsed.at("reports")) reports.push_back(r.dump());
      run.write("tables/results.csv", report_csv(reports));
    } else {
      char* csv_long = nullptr;
      char* csv_wide = nullptr;
      check(gs_ablate(dataset.get(), split.get(), config.c_str(), abl_trained ? 1 : 0, &out, &csv_long, &csv_wide));
      run.write("report.json", take(out));
      run.write("tables/ablation.csv", take(csv_long));
      run.write("tables/ablation_wide.csv", take(csv_wide));
    }
    close_run(run);
    return 0;
  }

  if (c_exp->parsed()) {
    Run run = open_run("export", exp_c, args);
    run.manifest["inputs"] = exp_inputs;
    std::vector<std::string> reports;
    for (const auto& p : exp_inputs) reports.push_back(read_text(p));
    run.write("tables/results.csv", report_csv(reports));
    close_run(run);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return dispatch(args);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status == 0 ? 1 : (f.status > 125 ? 125 : f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return GS_ERR_INTERNAL;
  }
}
