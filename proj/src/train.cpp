#include "tem4ctr/train.hpp"

#include <numeric>
#include <utility>

#include "report_json.hpp"
#include "tem4ctr/metrics.hpp"
#include "tem4ctr/stm.hpp"

namespace tem4ctr::harness {

namespace {
// Stream salt for the per-epoch shuffle; epoch index is added on top.
constexpr std::uint64_t kShuffleSalt = 0xE70Cull;
}  // namespace

void ExperimentConfig::validate() const {
  if (n == 0 || l == 0 || d == 0 || batch_size == 0 || epochs == 0 || samples_per_user == 0)
    throw ConfigError("n, l, d, batch_size, epochs, samples_per_user must be positive");
  if (learning_rate < 0.0 || !(learning_rate == learning_rate))
    throw ConfigError("learning_rate must be a nonnegative number");
  if (scorer_h1 == 0 || scorer_h2 == 0 || head_h1 == 0 || head_h2 == 0)
    throw ConfigError("MLP hidden widths must be positive");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  ExperimentConfig cfg;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "n") cfg.n = val.get<std::size_t>();
      else if (key == "l") cfg.l = val.get<std::size_t>();
      else if (key == "d") cfg.d = val.get<std::size_t>();
      else if (key == "learning_rate") cfg.learning_rate = val.get<double>();
      else if (key == "batch_size") cfg.batch_size = val.get<std::size_t>();
      else if (key == "epochs") cfg.epochs = val.get<std::size_t>();
      else if (key == "samples_per_user") cfg.samples_per_user = val.get<std::size_t>();
      else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
      else if (key == "variant") cfg.variant = model::variant_from_string(val.get<std::string>());
      else if (key == "iem_kind") cfg.iem_kind = model::iem_from_string(val.get<std::string>());
      else if (key == "iem_plain_concat") cfg.iem_plain_concat = val.get<bool>();
      else if (key == "per_side") cfg.per_side = val.get<bool>();
      else if (key == "past_only") cfg.past_only = val.get<bool>();
      else if (key == "scorer_h1") cfg.scorer_h1 = val.get<std::size_t>();
      else if (key == "scorer_h2") cfg.scorer_h2 = val.get<std::size_t>();
      else if (key == "head_h1") cfg.head_h1 = val.get<std::size_t>();
      else if (key == "head_h2") cfg.head_h2 = val.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return config_json(cfg).dump(2);
}

std::string report_to_json_text(const EvalReport& report) {
  return report_json(report).dump(2);
}

feedlog::SampleFile build_dataset(const std::vector<FeedbackEvent>& events,
                                  const ExperimentConfig& cfg) {
  cfg.validate();
  const auto streams = feedlog::build_streams(events);

  feedlog::SampleFile file;
  file.meta = feedlog::scan_vocab(events);
  file.meta.n = cfg.n;
  file.meta.l = cfg.l;
  file.meta.per_side = cfg.per_side;
  file.meta.past_only = cfg.past_only;

  feedlog::SampleOptions so;
  so.n = cfg.n;
  so.samples_per_user = cfg.samples_per_user;
  so.seed = cfg.seed;
  file.train = feedlog::make_training_samples(streams, so);
  file.test = feedlog::make_test_samples(streams, cfg.n, cfg.seed);

  stm::PreprocessOptions po;
  po.l = cfg.l;
  po.per_side = cfg.per_side;
  po.past_only = cfg.past_only;
  po.pool_capacity = cfg.l * cfg.n;
  stm::preprocess_dataset(streams, file.train, po);
  stm::preprocess_dataset(streams, file.test, po);
  return file;
}

model::ModelConfig make_model_config(const feedlog::SampleFileMeta& meta,
                                     const ExperimentConfig& cfg) {
  model::ModelConfig mc;
  mc.d = cfg.d;
  mc.num_items = meta.num_items;
  mc.num_cats = meta.num_cats;
  mc.dense_dim = meta.dense_dim;
  mc.variant = cfg.variant;
  mc.iem_kind = cfg.iem_kind;
  mc.iem_plain_concat = cfg.iem_plain_concat;
  mc.scorer_h1 = cfg.scorer_h1;
  mc.scorer_h2 = cfg.scorer_h2;
  mc.head_h1 = cfg.head_h1;
  mc.head_h2 = cfg.head_h2;
  return mc;
}

std::vector<double> fit(model::Tem4Ctr& m, const std::vector<TrainingSample>& train,
                        const ExperimentConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training requires at least one sample");

  diff::AdamConfig ac;
  ac.lr = cfg.learning_rate;
  diff::Adam adam(ac);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto& params = m.params();
  diff::Graph g;
  std::vector<double> curve;
  curve.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, kShuffleSalt + epoch);
    shuffle_rng.shuffle(order);

    double ce_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - b0);
      params.zero_grad();
      for (std::size_t i = b0; i < b0 + bsz; ++i) {
        const TrainingSample& s = train[order[i]];
        g.clear();
        const auto out = m.forward(g, s);
        const diff::NodeId p[1] = {out.p};
        const std::uint8_t lab[1] = {s.label ? std::uint8_t{1} : std::uint8_t{0}};
        // denom = bsz makes per-sample graph gradients sum to the batch mean.
        const diff::NodeId loss = model::Tem4Ctr::loss(g, p, lab, bsz);
        g.backward(loss);
        ce_sum += g.scalar(loss) * static_cast<double>(bsz);
      }
      adam.step(params);
    }
    curve.push_back(ce_sum / static_cast<double>(train.size()));
  }
  return curve;
}

std::vector<double> score_samples(const model::Tem4Ctr& m,
                                  std::span<const TrainingSample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  diff::Graph g;
  for (const TrainingSample& s : samples) {
    g.clear();
    out.push_back(m.forward(g, s).p_value);
  }
  return out;
}

double test_auc(const model::Tem4Ctr& m, std::span<const TrainingSample> test) {
  const std::vector<double> scores = score_samples(m, test);
  std::vector<std::uint8_t> labels(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) labels[i] = test[i].label ? 1 : 0;
  return auc(scores, labels);
}

TrainOutcome run_training(const feedlog::SampleFile& data, const ExperimentConfig& cfg) {
  cfg.validate();
  model::Tem4Ctr m(make_model_config(data.meta, cfg), cfg.seed);

  EvalReport rep;
  rep.loss_curve = fit(m, data.train, cfg);
  rep.auc = test_auc(m, data.test);
  rep.train_samples = data.train.size();
  rep.test_samples = data.test.size();
  rep.seed = cfg.seed;
  rep.config = cfg;
  return {std::move(m), std::move(rep)};
}

}  // namespace tem4ctr::harness
