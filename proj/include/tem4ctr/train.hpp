#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tem4ctr/feedlog.hpp"
#include "tem4ctr/model.hpp"

namespace tem4ctr::harness {

// Every knob of one experiment: sampling, context search, model shape, and
// optimization. CLI flags and the JSON config file mirror these field names.
struct ExperimentConfig {
  std::size_t n = 30;  // click-history cap
  std::size_t l = 10;  // exposure-context capacity per click
  std::size_t d = 16;  // per-field embedding width
  double learning_rate = 0.005;
  std::size_t batch_size = 256;
  std::size_t epochs = 3;
  std::size_t samples_per_user = 4;
  std::uint64_t seed = 1;
  model::Variant variant = model::Variant::Full;
  model::IemKind iem_kind = model::IemKind::TargetAttention;
  bool iem_plain_concat = false;
  bool per_side = false;
  bool past_only = false;
  std::size_t scorer_h1 = 36;
  std::size_t scorer_h2 = 16;
  std::size_t head_h1 = 64;
  std::size_t head_h2 = 32;

  // Throws ConfigError when a size, rate, or width is out of range.
  void validate() const;
};

// JSON object with the field names above; unknown keys raise ConfigError so
// config-file typos fail loudly instead of silently using a default.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

struct EvalReport {
  double auc = 0.0;
  std::optional<double> rela_impr_vs_base;  // set by studies that train a base
  std::vector<double> loss_curve;           // mean train cross entropy per epoch
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::uint64_t seed = 0;
  ExperimentConfig config;
};

std::string report_to_json_text(const EvalReport& report);

// Raw events -> vocabulary scan -> train/test sampling -> context search.
// The pooled context is attached with capacity l * n for the no-alignment
// variant. Deterministic given (events, cfg).
feedlog::SampleFile build_dataset(const std::vector<FeedbackEvent>& events,
                                  const ExperimentConfig& cfg);

// Model shape for a dataset: vocab bounds from the file meta, everything
// else from the experiment.
model::ModelConfig make_model_config(const feedlog::SampleFileMeta& meta,
                                     const ExperimentConfig& cfg);

// Mini-batch Adam over the mean cross entropy. Shuffle order, init, and
// batching are all seed-determined, so reruns are bit-identical. Returns the
// per-epoch mean train cross entropy. Throws ConfigError on an empty
// training set.
std::vector<double> fit(model::Tem4Ctr& m, const std::vector<TrainingSample>& train,
                        const ExperimentConfig& cfg);

// Forward-only click probabilities, one per sample.
std::vector<double> score_samples(const model::Tem4Ctr& m,
                                  std::span<const TrainingSample> samples);

double test_auc(const model::Tem4Ctr& m, std::span<const TrainingSample> test);

struct TrainOutcome {
  model::Tem4Ctr model;
  EvalReport report;
};

// The preprocess -> train -> evaluate pipeline for one prepared dataset.
TrainOutcome run_training(const feedlog::SampleFile& data, const ExperimentConfig& cfg);

}  // namespace tem4ctr::harness
