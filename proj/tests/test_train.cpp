#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tem4ctr/common.hpp"
#include "tem4ctr/experiments.hpp"
#include "tem4ctr/synth.hpp"
#include "tem4ctr/train.hpp"

using namespace tem4ctr;
using namespace tem4ctr::harness;

namespace {

// Small enough to train in well under a second per run.
SynthConfig tiny_synth() {
  SynthConfig s;
  s.num_users = 40;
  s.num_items = 60;
  s.num_categories = 6;
  s.events_per_user = 30;
  s.seed = 3;
  return s;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.n = 4;
  cfg.l = 2;
  cfg.d = 4;
  cfg.batch_size = 32;
  cfg.epochs = 1;
  cfg.samples_per_user = 2;
  cfg.scorer_h1 = 6;
  cfg.scorer_h2 = 4;
  cfg.head_h1 = 8;
  cfg.head_h2 = 6;
  cfg.seed = 5;
  return cfg;
}

bool same_params(const diff::ParamStore& a, const diff::ParamStore& b) {
  if (a.tensors().size() != b.tensors().size()) return false;
  for (const auto& [name, t] : a.tensors()) {
    if (!b.contains(name)) return false;
    const diff::Tensor& o = b.at(name);
    if (t.shape != o.shape || t.values != o.values) return false;
  }
  return true;
}

// RAII guard so thread-count experiments cannot leak into other tests.
struct EnvGuard {
  std::string name;
  std::optional<std::string> saved;
  explicit EnvGuard(const char* n) : name(n) {
    if (const char* v = std::getenv(n)) saved = v;
  }
  ~EnvGuard() {
    if (saved) ::setenv(name.c_str(), saved->c_str(), 1);
    else ::unsetenv(name.c_str());
  }
};

}  // namespace

TEST_SUITE("train") {

TEST_CASE("experiment configs round-trip through JSON") {
  ExperimentConfig cfg;
  cfg.n = 7;
  cfg.l = 3;
  cfg.d = 12;
  cfg.learning_rate = 0.25;
  cfg.batch_size = 9;
  cfg.epochs = 11;
  cfg.samples_per_user = 5;
  cfg.seed = 42;
  cfg.variant = model::Variant::NoPem;
  cfg.iem_kind = model::IemKind::AvgPool;
  cfg.iem_plain_concat = true;
  cfg.per_side = true;
  cfg.past_only = true;
  cfg.scorer_h1 = 13;
  cfg.scorer_h2 = 14;
  cfg.head_h1 = 15;
  cfg.head_h2 = 16;

  ExperimentConfig back = config_from_json_text(config_to_json_text(cfg));
  CHECK(back.n == cfg.n);
  CHECK(back.l == cfg.l);
  CHECK(back.d == cfg.d);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.samples_per_user == cfg.samples_per_user);
  CHECK(back.seed == cfg.seed);
  CHECK(back.variant == cfg.variant);
  CHECK(back.iem_kind == cfg.iem_kind);
  CHECK(back.iem_plain_concat == cfg.iem_plain_concat);
  CHECK(back.per_side == cfg.per_side);
  CHECK(back.past_only == cfg.past_only);
  CHECK(back.scorer_h1 == cfg.scorer_h1);
  CHECK(back.scorer_h2 == cfg.scorer_h2);
  CHECK(back.head_h1 == cfg.head_h1);
  CHECK(back.head_h2 == cfg.head_h2);
}

TEST_CASE("config parsing fails loudly") {
  CHECK_THROWS_AS(config_from_json_text("{nope"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"epochz": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"epochs": "three"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text(R"({"variant": "transformer"})"), ConfigError);
}

TEST_CASE("validate guards sizes and the learning rate") {
  ExperimentConfig cfg;
  cfg.validate();  // defaults are fine

  cfg.learning_rate = 0.0;
  cfg.validate();  // zero is allowed, it just freezes training

  ExperimentConfig bad = cfg;
  bad.n = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.learning_rate = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.learning_rate = std::nan("");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.head_h2 = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("build_dataset wires sampling and context search together") {
  ExperimentConfig cfg = tiny_experiment();
  auto data = build_dataset(gen_synthetic(tiny_synth()), cfg);

  CHECK(data.meta.n == cfg.n);
  CHECK(data.meta.l == cfg.l);
  CHECK(data.meta.num_items >= 1);
  CHECK(data.meta.num_cats >= 1);
  CHECK(data.meta.dense_dim == 0);
  REQUIRE_FALSE(data.train.empty());
  REQUIRE_FALSE(data.test.empty());
  for (const auto& s : data.train) {
    CHECK(s.contexts.size() == s.history.size());
    REQUIRE(s.pooled_context.has_value());
    CHECK(s.pooled_context->capacity == cfg.l * cfg.n);
  }

  model::ModelConfig mc = make_model_config(data.meta, cfg);
  CHECK(mc.d == cfg.d);
  CHECK(mc.num_items == data.meta.num_items);
  CHECK(mc.num_cats == data.meta.num_cats);
  CHECK(mc.scorer_h1 == cfg.scorer_h1);
}

TEST_CASE("a zero learning rate leaves the parameters untouched") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.learning_rate = 0.0;
  auto data = build_dataset(gen_synthetic(tiny_synth()), cfg);

  model::Tem4Ctr m(make_model_config(data.meta, cfg), cfg.seed);
  diff::ParamStore before = m.params();
  fit(m, data.train, cfg);
  CHECK(same_params(before, m.params()));
}

TEST_CASE("training is bit-reproducible per seed") {
  ExperimentConfig cfg = tiny_experiment();
  auto data = build_dataset(gen_synthetic(tiny_synth()), cfg);

  TrainOutcome a = run_training(data, cfg);
  TrainOutcome b = run_training(data, cfg);
  CHECK(same_params(a.model.params(), b.model.params()));
  CHECK(report_to_json_text(a.report) == report_to_json_text(b.report));

  cfg.seed = 6;
  TrainOutcome c = run_training(data, cfg);
  CHECK_FALSE(same_params(a.model.params(), c.model.params()));
}

TEST_CASE("the loss curve trends downward on learnable data") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.epochs = 3;
  cfg.learning_rate = 0.01;
  auto data = build_dataset(gen_synthetic(tiny_synth()), cfg);

  auto outcome = run_training(data, cfg);
  REQUIRE(outcome.report.loss_curve.size() == 3);
  CHECK(outcome.report.loss_curve.back() < outcome.report.loss_curve.front());
}

TEST_CASE("run_training reports the full experiment record") {
  ExperimentConfig cfg = tiny_experiment();
  auto data = build_dataset(gen_synthetic(tiny_synth()), cfg);
  TrainOutcome out = run_training(data, cfg);

  CHECK(out.report.auc > 0.0);
  CHECK(out.report.auc < 1.0);
  CHECK(out.report.loss_curve.size() == cfg.epochs);
  CHECK(out.report.train_samples == data.train.size());
  CHECK(out.report.test_samples == data.test.size());
  CHECK(out.report.seed == cfg.seed);
  CHECK(out.report.config.variant == cfg.variant);
  CHECK_FALSE(out.report.rela_impr_vs_base.has_value());

  auto j = nlohmann::json::parse(report_to_json_text(out.report));
  CHECK(j.at("auc").get<double>() == out.report.auc);
  CHECK(j.at("config").at("epochs").get<std::size_t>() == cfg.epochs);
}

TEST_CASE("an empty training split is refused") {
  feedlog::SampleFile file;
  file.meta.num_items = 4;
  file.meta.num_cats = 2;
  CHECK_THROWS_AS(run_training(file, tiny_experiment()), ConfigError);
}

TEST_CASE("worker_threads follows the environment variable") {
  EnvGuard guard("TEM4CTR_THREADS");

  ::setenv("TEM4CTR_THREADS", "3", 1);
  CHECK(worker_threads() == 3);

  ::setenv("TEM4CTR_THREADS", "0", 1);
  CHECK_THROWS_AS(worker_threads(), ConfigError);
  ::setenv("TEM4CTR_THREADS", "lots", 1);
  CHECK_THROWS_AS(worker_threads(), ConfigError);
  ::setenv("TEM4CTR_THREADS", "-2", 1);
  CHECK_THROWS_AS(worker_threads(), ConfigError);

  ::unsetenv("TEM4CTR_THREADS");
  CHECK(worker_threads() >= 1);
}

TEST_CASE("parallel_for is deterministic in its outputs and loud about failures") {
  EnvGuard guard("TEM4CTR_THREADS");

  auto run = [](const char* workers) {
    ::setenv("TEM4CTR_THREADS", workers, 1);
    std::vector<double> out(64, 0.0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
    return out;
  };
  CHECK(run("1") == run("4"));

  ::setenv("TEM4CTR_THREADS", "4", 1);
  CHECK_THROWS_AS(
      parallel_for(16, [](std::size_t i) {
        if (i == 5) throw IntegrityError("job 5 exploded");
      }),
      IntegrityError);
  parallel_for(0, [](std::size_t) { throw IntegrityError("never runs"); });
}

TEST_CASE("the ablation study trains every variant and measures uplift") {
  ExperimentConfig cfg = tiny_experiment();
  AblateReport rep = run_ablate(tiny_synth(), cfg, 2);

  REQUIRE(rep.rows.size() == 5);
  CHECK(rep.num_seeds == 2);
  const model::Variant order[] = {model::Variant::Full, model::Variant::NoStm,
                                  model::Variant::NoPem, model::Variant::NoIem,
                                  model::Variant::AvgPoolDnn};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rep.rows[i].variant == order[i]);
    REQUIRE(rep.rows[i].aucs.size() == 2);
    double mean = (rep.rows[i].aucs[0] + rep.rows[i].aucs[1]) / 2;
    CHECK(rep.rows[i].mean_auc == doctest::Approx(mean).epsilon(1e-12));
    CHECK(rep.rows[i].std_auc >= 0.0);
    CHECK(rep.rows[i].mean_rela_impr.has_value() == (i != 4));
  }

  auto j = nlohmann::json::parse(to_json(rep));
  CHECK(j.at("study") == "ablate");
  CHECK(j.at("rows").size() == 5);
  CHECK(j.at("num_seeds").get<std::size_t>() == 2);

  // Same inputs, same bytes.
  CHECK(to_json(run_ablate(tiny_synth(), cfg, 2)) == to_json(rep));

  // Header plus one line per variant.
  const std::string csv = to_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.rfind("variant,", 0) == 0);
}

TEST_CASE("the sweep walks the documented grid") {
  ExperimentConfig cfg = tiny_experiment();
  auto events = gen_synthetic(tiny_synth());

  SweepReport rep = run_sweep(events, cfg, "l");
  CHECK(rep.param == "l");
  REQUIRE(rep.points.size() == 5);
  const std::size_t grid[] = {2, 4, 6, 8, 10};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rep.points[i].value == grid[i]);
    CHECK(rep.points[i].report.config.l == grid[i]);
    CHECK(rep.points[i].report.auc > 0.0);
  }

  auto j = nlohmann::json::parse(to_json(rep));
  CHECK(j.at("study") == "sweep");
  CHECK(j.at("param") == "l");

  const std::string csv = to_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  CHECK_THROWS_AS(run_sweep(events, cfg, "momentum"), ConfigError);
}

}  // TEST_SUITE
