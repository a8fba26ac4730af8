// tem4ctr command line: synthetic log generation, preprocessing, training,
// checkpoint evaluation, and the ablation/sweep studies.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <functional>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tem4ctr/experiments.hpp"
#include "tem4ctr/feedlog.hpp"
#include "tem4ctr/model.hpp"
#include "tem4ctr/synth.hpp"
#include "tem4ctr/train.hpp"

namespace {

namespace feedlog = tem4ctr::feedlog;
namespace harness = tem4ctr::harness;
using harness::ExperimentConfig;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tem4ctr::Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tem4ctr::Error("cannot write " + path);
  out << text;
}

// "-" or empty means stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text << '\n';
  else write_file(path, text + "\n");
}

// Binds every ExperimentConfig field as a flag. Precedence: built-in
// defaults, then the --config JSON file, then flags given on the line.
class ConfigFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "JSON config file; flags override its values");

    bind(cmd->add_option("--n", v_.n, "click-history cap")->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.n = v.n; });
    bind(cmd->add_option("--l", v_.l, "exposure-context capacity per click")->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.l = v.l; });
    bind(cmd->add_option("--d", v_.d, "per-field embedding width")->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.d = v.d; });
    bind(cmd->add_option("--learning-rate,--learning_rate", v_.learning_rate, "Adam step size")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.learning_rate = v.learning_rate; });
    bind(cmd->add_option("--batch-size,--batch_size", v_.batch_size, "mini-batch size")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.batch_size = v.batch_size; });
    bind(cmd->add_option("--epochs", v_.epochs, "training epochs")->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.epochs = v.epochs; });
    bind(cmd->add_option("--samples-per-user,--samples_per_user", v_.samples_per_user,
                         "training endpoints drawn per user")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) {
           c.samples_per_user = v.samples_per_user;
         });
    bind(cmd->add_option("--seed", v_.seed, "sampling/init seed")->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.seed = v.seed; });
    bind(cmd->add_option("--variant", variant_, "full|no-stm|no-pem|no-iem|avgpool-dnn")
             ->check(CLI::IsMember({"full", "no-stm", "no-pem", "no-iem", "avgpool-dnn"})),
         [this](ExperimentConfig& c, const ExperimentConfig&) {
           c.variant = tem4ctr::model::variant_from_string(variant_);
         });
    bind(cmd->add_option("--iem-kind,--iem_kind", iem_, "din|avgpool")
             ->check(CLI::IsMember({"din", "avgpool"})),
         [this](ExperimentConfig& c, const ExperimentConfig&) {
           c.iem_kind = tem4ctr::model::iem_from_string(iem_);
         });
    bind(cmd->add_flag("--iem-plain-concat,--iem_plain_concat,!--no-iem-plain-concat",
                       v_.iem_plain_concat, "score [q,k] instead of [q,k,q-k,q*k]"),
         [](ExperimentConfig& c, const ExperimentConfig& v) {
           c.iem_plain_concat = v.iem_plain_concat;
         });
    bind(cmd->add_flag("--per-side,--per_side,!--no-per-side", v_.per_side,
                       "search l exposures per side instead of l total"),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.per_side = v.per_side; });
    bind(cmd->add_flag("--past-only,--past_only,!--no-past-only", v_.past_only,
                       "restrict context search to ts <= click ts"),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.past_only = v.past_only; });
    bind(cmd->add_option("--scorer-h1,--scorer_h1", v_.scorer_h1, "attention MLP hidden 1")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.scorer_h1 = v.scorer_h1; });
    bind(cmd->add_option("--scorer-h2,--scorer_h2", v_.scorer_h2, "attention MLP hidden 2")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.scorer_h2 = v.scorer_h2; });
    bind(cmd->add_option("--head-h1,--head_h1", v_.head_h1, "prediction MLP hidden 1")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.head_h1 = v.head_h1; });
    bind(cmd->add_option("--head-h2,--head_h2", v_.head_h2, "prediction MLP hidden 2")
             ->capture_default_str(),
         [](ExperimentConfig& c, const ExperimentConfig& v) { c.head_h2 = v.head_h2; });
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_path_.empty()) cfg = harness::config_from_json_text(read_file(config_path_));
    for (const auto& [opt, apply] : overrides_)
      if (opt->count() > 0) apply(cfg, v_);
    cfg.validate();
    return cfg;
  }

 private:
  using Apply = std::function<void(ExperimentConfig&, const ExperimentConfig&)>;
  void bind(CLI::Option* opt, Apply apply) { overrides_.emplace_back(opt, std::move(apply)); }

  ExperimentConfig v_;
  std::string variant_ = "full";
  std::string iem_ = "din";
  std::string config_path_;
  std::vector<std::pair<CLI::Option*, Apply>> overrides_;
};

class SynthFlags {
 public:
  void attach(CLI::App* cmd, const std::string& seed_flag) {
    cmd->add_option("--num-users,--num_users", v_.num_users, "users")->capture_default_str();
    cmd->add_option("--num-items,--num_items", v_.num_items, "catalog size")
        ->capture_default_str();
    cmd->add_option("--num-categories,--num_categories", v_.num_categories, "categories")
        ->capture_default_str();
    cmd->add_option("--latent-dim,--latent_dim", v_.latent_dim, "latent interest width")
        ->capture_default_str();
    cmd->add_option("--events-per-user,--events_per_user", v_.events_per_user,
                    "events per user stream")
        ->capture_default_str();
    cmd->add_option("--exposure-rate,--exposure_rate", v_.exposure_rate,
                    "expected unclicked share of the stream")
        ->capture_default_str();
    cmd->add_option("--click-temperature,--click_temperature", v_.click_temperature,
                    "softmax temperature for click choices")
        ->capture_default_str();
    cmd->add_option("--context-signal-strength,--context_signal_strength",
                    v_.context_signal_strength,
                    "probability an exposure reveals the next click's direction")
        ->capture_default_str();
    cmd->add_option(seed_flag, v_.seed, "data seed")->capture_default_str();
  }

  const harness::SynthConfig& get() const { return v_; }

 private:
  harness::SynthConfig v_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TEM4CTR: temporally aligned exposure-context CTR model"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic feedback log");
  SynthFlags gen_synth;
  gen_synth.attach(gen, "--seed");
  std::string gen_out = "-";
  gen->add_option("--out", gen_out, "JSON-lines output path, - for stdout");
  gen->callback([&] {
    const auto events = harness::gen_synthetic(gen_synth.get());
    if (gen_out.empty() || gen_out == "-") feedlog::write_events(std::cout, events);
    else feedlog::write_events_file(gen_out, events);
  });

  auto* pre = app.add_subcommand("preprocess",
                                 "sample train/test pairs and search exposure contexts");
  ConfigFlags pre_cfg;
  pre_cfg.attach(pre);
  std::string pre_events, pre_out;
  pre->add_option("--events", pre_events, "raw feedback log (JSON lines)")->required();
  pre->add_option("--out", pre_out, "sample file output path")->required();
  pre->callback([&] {
    const ExperimentConfig cfg = pre_cfg.resolve();
    const auto data = harness::build_dataset(feedlog::parse_events_file(pre_events), cfg);
    feedlog::write_samples_file(pre_out, data);
  });

  auto* train = app.add_subcommand("train", "train one model and report its test AUC");
  ConfigFlags train_cfg;
  train_cfg.attach(train);
  std::string train_events, train_data, train_report = "-", train_params_out;
  auto* train_src = train->add_option_group("input", "training data source");
  train_src->add_option("--events", train_events, "raw feedback log, preprocessed on the fly");
  train_src->add_option("--data", train_data, "preprocessed sample file");
  train_src->require_option(1);
  train->add_option("--report", train_report, "report path, - for stdout");
  train->add_option("--params-out,--params_out", train_params_out,
                    "checkpoint path (writes <path> and <path>.meta.json)");
  train->callback([&] {
    ExperimentConfig cfg = train_cfg.resolve();
    feedlog::SampleFile data;
    if (!train_data.empty()) {
      data = feedlog::read_samples_file(train_data);
      cfg.n = data.meta.n;  // the file fixed these at preprocess time
      cfg.l = data.meta.l;
      cfg.per_side = data.meta.per_side;
      cfg.past_only = data.meta.past_only;
    } else {
      data = harness::build_dataset(feedlog::parse_events_file(train_events), cfg);
    }
    auto outcome = harness::run_training(data, cfg);
    emit(train_report, harness::report_to_json_text(outcome.report));
    if (!train_params_out.empty()) {
      outcome.model.params().save_binary(train_params_out);
      nlohmann::ordered_json side;
      side["config"] = nlohmann::ordered_json::parse(harness::config_to_json_text(cfg));
      side["vocab"] = {{"num_items", data.meta.num_items},
                       {"num_cats", data.meta.num_cats},
                       {"dense_dim", data.meta.dense_dim}};
      write_file(train_params_out + ".meta.json", side.dump(2) + "\n");
    }
  });

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a sample file's test split");
  std::string eval_data, eval_params, eval_out = "-";
  ev->add_option("--data", eval_data, "preprocessed sample file")->required();
  ev->add_option("--params", eval_params, "checkpoint written by train --params-out")->required();
  ev->add_option("--out", eval_out, "report path, - for stdout");
  ev->callback([&] {
    const auto data = feedlog::read_samples_file(eval_data);
    nlohmann::json side;
    try {
      side = nlohmann::json::parse(read_file(eval_params + ".meta.json"));
      side.at("config");
      side.at("vocab");
    } catch (const nlohmann::json::exception& e) {
      throw tem4ctr::Error(eval_params + ".meta.json is not a usable checkpoint sidecar: " +
                           e.what());
    }
    const ExperimentConfig cfg = harness::config_from_json_text(side["config"].dump());
    feedlog::SampleFileMeta meta = data.meta;
    // The checkpoint's vocabulary wins: the embedding tables were sized by it.
    meta.num_items = side["vocab"].at("num_items").get<std::int64_t>();
    meta.num_cats = side["vocab"].at("num_cats").get<std::int64_t>();
    meta.dense_dim = side["vocab"].at("dense_dim").get<std::size_t>();
    const tem4ctr::model::Tem4Ctr net(harness::make_model_config(meta, cfg),
                                      tem4ctr::diff::ParamStore::load_binary(eval_params));
    nlohmann::ordered_json out;
    out["auc"] = harness::test_auc(net, data.test);
    out["test_samples"] = data.test.size();
    emit(eval_out, out.dump(2));
  });

  auto* ab = app.add_subcommand("ablate", "train every model variant over several data seeds");
  ConfigFlags ab_cfg;
  ab_cfg.attach(ab);
  SynthFlags ab_synth;
  ab_synth.attach(ab, "--synth-seed,--synth_seed");
  std::string ab_events, ab_out = "-", ab_csv;
  std::size_t ab_seeds = 5;
  ab->add_option("--events", ab_events, "raw log to reuse instead of synthetic data");
  ab->add_option("--seeds", ab_seeds, "number of data seeds")->capture_default_str();
  ab->add_option("--out", ab_out, "report path, - for stdout");
  ab->add_option("--csv", ab_csv, "also write rows as CSV");
  ab->callback([&] {
    const ExperimentConfig cfg = ab_cfg.resolve();
    const harness::AblateReport rep =
        ab_events.empty() ? harness::run_ablate(ab_synth.get(), cfg, ab_seeds)
                          : harness::run_ablate(feedlog::parse_events_file(ab_events), cfg,
                                                ab_seeds);
    emit(ab_out, harness::to_json(rep));
    if (!ab_csv.empty()) write_file(ab_csv, harness::to_csv(rep));
  });

  auto* sw = app.add_subcommand("sweep", "train across a hyperparameter range");
  ConfigFlags sw_cfg;
  sw_cfg.attach(sw);
  SynthFlags sw_synth;
  sw_synth.attach(sw, "--synth-seed,--synth_seed");
  std::string sw_param, sw_events, sw_out = "-", sw_csv;
  sw->add_option("--param", sw_param, "which knob to sweep: d or l")
      ->required()
      ->check(CLI::IsMember({"d", "l"}));
  sw->add_option("--events", sw_events, "raw log to reuse instead of synthetic data");
  sw->add_option("--out", sw_out, "report path, - for stdout");
  sw->add_option("--csv", sw_csv, "also write points as CSV");
  sw->callback([&] {
    const ExperimentConfig cfg = sw_cfg.resolve();
    const harness::SweepReport rep =
        sw_events.empty() ? harness::run_sweep(sw_synth.get(), cfg, sw_param)
                          : harness::run_sweep(feedlog::parse_events_file(sw_events), cfg,
                                               sw_param);
    emit(sw_out, harness::to_json(rep));
    if (!sw_csv.empty()) write_file(sw_csv, harness::to_csv(rep));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const tem4ctr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
