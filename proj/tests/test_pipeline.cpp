#include <doctest.h>

#include "geomshot/checkpoint.hpp"
#include "geomshot/config.hpp"
#include "geomshot/error.hpp"
#include "geomshot/eval.hpp"
#include "geomshot/pipeline.hpp"
#include "geomshot/synth.hpp"

using namespace geomshot;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

RunConfig quick_config() {
  RunConfig c = default_config();
  c.encoder.hidden_dim = 32;
  c.encoder.embed_dim = 16;
  c.train.episodes_per_epoch = 5;
  c.train.max_epochs = 10;
  c.train.monitor_episodes = 10;
  c.train.optimizer.learning_rate = 1e-3;
  c.train.adapt_epochs = 3;
  c.eval.episodes = 100;
  return c;
}

struct Corpus {
  DatasetCatalog catalog;
  FeatureTable train;
  FeatureTable test;
};

Corpus make_corpus(std::uint64_t seed, FeatureKind kind = FeatureKind::Angle, int classes = 6) {
  synth::SynthOptions o;
  o.classes = classes;
  o.per_class = 80;
  o.seed = seed;
  Corpus c{synth::generate(o, "synth" + std::to_string(seed)), {}, {}};
  const SplitFile split = stratified_split(c.catalog, 0.7, 42);
  c.train = build_features(c.catalog, resolve_paths(split.train, c.catalog), {kind, true});
  c.test = build_features(c.catalog, resolve_paths(split.test, c.catalog), {kind, true});
  return c;
}

const Corpus& corpus() {
  static const Corpus c = make_corpus(42);
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig d = default_config();
  CHECK(d.train.episode.n_way == 5);
  CHECK(d.train.patience == 15);
  CHECK(d.train.supcon_weight == 0.5);
  CHECK(d.train.temperature == 0.07);
  CHECK(d.train.optimizer.learning_rate == 1e-4);
  CHECK(d.train.optimizer.weight_decay == 1e-4);
  CHECK(d.train.optimizer.clip_norm == 1.0);
  CHECK(d.train.episodes_per_epoch == 100);
  CHECK(d.train.max_epochs == 100);
  CHECK(d.train.adapt_epochs == 20);
  CHECK(d.eval.episodes == 600);
  CHECK(d.encoder.input_dim == 20);

  const RunConfig raw = parse_config(R"({"schema_version": 1, "representation": "raw", "train": {"seed": 7}})");
  CHECK(raw.features.kind == FeatureKind::Raw);
  CHECK(raw.encoder.input_dim == 63);
  CHECK(raw.train.seed == 7u);

  const RunConfig q = quick_config();
  const RunConfig back = config_from_json(config_to_json(q));
  CHECK(config_to_json(back) == config_to_json(q));

  CHECK(code_of([] { parse_config(R"({"schema_version": 1, "trian": {}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"schema_version": 1, "train": {"lr": 1}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"schema_version": 2})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"representation": "angle"})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"schema_version": 1, "train": {"patience": 0}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"schema_version": 1, "train": {"seed": "x"}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config("{not json"); }) == ErrorCode::Config);
}

TEST_CASE("within-domain training") {
  const RunConfig cfg = quick_config();
  const auto r1 = pipeline::train_within_domain(corpus().train, cfg);
  const auto r2 = pipeline::train_within_domain(corpus().train, cfg);
  REQUIRE_FALSE(r1.log.empty());
  CHECK(pipeline::training_log_jsonl(r1.log) == pipeline::training_log_jsonl(r2.log));
  CHECK(nnet::serialize_checkpoint(r1.checkpoint) == nnet::serialize_checkpoint(r2.checkpoint));
  CHECK(r1.best_monitor_acc >= 0.99);
  CHECK(r1.log.front().lr == cfg.train.optimizer.learning_rate);
  CHECK(r1.checkpoint.metadata.at("representation") == "angle");
  CHECK(r1.checkpoint.metadata.at("stage") == "within_domain");

  const std::string line = pipeline::training_log_jsonl(r1.log).substr(0, pipeline::training_log_jsonl(r1.log).find('\n'));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.contains("epoch"));
  CHECK(j.contains("lr"));
  CHECK(j.contains("mean_loss"));
  CHECK(j.contains("monitor_acc"));
}

TEST_CASE("early stopping keeps the best epoch") {
  // Monitor accuracy saturates immediately on this corpus, so no later epoch
  // can strictly improve on epoch 0.
  RunConfig cfg = quick_config();
  cfg.train.max_epochs = 40;
  cfg.train.episodes_per_epoch = 1;
  cfg.train.patience = 15;
  const auto r = pipeline::train_within_domain(corpus().train, cfg);
  REQUIRE(r.log.front().monitor_acc == 1.0);
  CHECK(r.early_stopped);
  CHECK(r.best_epoch == 0);
  CHECK(r.log.size() == 16u);
  CHECK(r.checkpoint.metadata.at("best_epoch") == "0");
}

TEST_CASE("training guards") {
  RunConfig cfg = quick_config();
  cfg.train.episode.n_way = 7;
  CHECK(code_of([&] { pipeline::train_within_domain(corpus().train, cfg); }) == ErrorCode::InsufficientClasses);
}

TEST_CASE("pretraining and adaptation") {
  const RunConfig cfg = quick_config();
  const auto pre = pipeline::pretrain_source(corpus().train, cfg, "lang_a");
  CHECK(pre.checkpoint.metadata.at("source") == "lang_a");
  CHECK(pre.checkpoint.metadata.at("representation") == "angle");
  CHECK(pre.checkpoint.metadata.at("input_dim") == "20");
  CHECK(pre.checkpoint.metadata.at("stage") == "pretrain");

  const Corpus target = make_corpus(7);

  SUBCASE("frozen is the identity") {
    const auto r = pipeline::adapt(pre.checkpoint, target.train, pipeline::AdaptMode::Frozen, cfg);
    CHECK(nnet::serialize_checkpoint(r.checkpoint) == nnet::serialize_checkpoint(pre.checkpoint));
  }

  SUBCASE("target-supervised touches only the projection") {
    const auto r = pipeline::adapt(pre.checkpoint, target.train, pipeline::AdaptMode::TargetSupervised, cfg);
    REQUIRE(r.checkpoint.tensors.size() == pre.checkpoint.tensors.size());
    CHECK(r.log.size() <= static_cast<std::size_t>(cfg.train.adapt_epochs));
    for (std::size_t i = 0; i < r.checkpoint.tensors.size(); ++i) {
      const auto& a = pre.checkpoint.tensors[i];
      const auto& b = r.checkpoint.tensors[i];
      CAPTURE(a.name);
      if (a.name.rfind("proj.", 0) == 0)
        CHECK(a.value != b.value);
      else
        CHECK(a.value == b.value);
    }
    CHECK(r.checkpoint.metadata.at("adapt_mode") == "target_supervised");
    CHECK(r.checkpoint.metadata.at("adapted_on") == target.train.dataset);
  }

  SUBCASE("representation mismatch") {
    const Corpus raw = make_corpus(7, FeatureKind::Raw);
    CHECK(code_of([&] { pipeline::adapt(pre.checkpoint, raw.train, pipeline::AdaptMode::Frozen, cfg); }) ==
          ErrorCode::ConfigMismatch);
    CHECK(code_of([&] { pipeline::check_compatible(pre.checkpoint, raw.test); }) == ErrorCode::ConfigMismatch);
  }

  SUBCASE("frozen evaluation on the source matches within-domain quality") {
    const auto within = pipeline::train_within_domain(corpus().train, cfg);
    const auto e_pre = nnet::encoder_from_checkpoint(pre.checkpoint);
    const auto e_in = nnet::encoder_from_checkpoint(within.checkpoint);
    const double a = eval::evaluate(&e_pre, corpus().test, cfg.eval, "frozen").mean;
    const double b = eval::evaluate(&e_in, corpus().test, cfg.eval).mean;
    CHECK(std::abs(a - b) <= 0.02);
  }
}

TEST_CASE("adapt mode names") {
  CHECK(pipeline::parse_adapt_mode("frozen") == pipeline::AdaptMode::Frozen);
  CHECK(pipeline::parse_adapt_mode("target_supervised") == pipeline::AdaptMode::TargetSupervised);
  CHECK(code_of([] { pipeline::parse_adapt_mode("full"); }) == ErrorCode::InvalidArgument);
}
