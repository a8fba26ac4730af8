#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tem4ctr/synth.hpp"
#include "tem4ctr/train.hpp"

namespace tem4ctr::harness {

// Worker cap: TEM4CTR_THREADS when set (a positive integer), otherwise the
// hardware concurrency, never less than 1.
std::size_t worker_threads();

// Runs fn(0..jobs-1) on up to worker_threads() workers. Callers index their
// result buffers by job id, so output never depends on scheduling. The first
// exception a job throws is rethrown after every worker finishes.
void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn);

struct AblateRow {
  model::Variant variant;
  std::vector<double> aucs;  // one per data seed, ascending seed order
  double mean_auc = 0.0;
  double std_auc = 0.0;  // population std over seeds
  std::optional<double> mean_rela_impr;  // vs the pooling base; unset on the base row
};

struct AblateReport {
  std::vector<AblateRow> rows;  // full, no-stm, no-pem, no-iem, avgpool-dnn
  std::size_t num_seeds = 0;
  ExperimentConfig config;
};

// Trains every variant across num_seeds datasets. Synthetic mode draws a
// fresh log per seed index k (data seed synth.seed + k); event mode reuses
// the given log and varies sampling and init seeds only. Within one seed
// index all variants share the dataset and init seed, so rows differ by
// architecture alone. Uplift is measured against the avgpool-dnn row under
// the same seed, then averaged.
AblateReport run_ablate(const SynthConfig& synth, const ExperimentConfig& cfg,
                        std::size_t num_seeds);
AblateReport run_ablate(const std::vector<FeedbackEvent>& events,
                        const ExperimentConfig& cfg, std::size_t num_seeds);

std::string to_json(const AblateReport& report);
std::string to_csv(const AblateReport& report);

struct SweepPoint {
  std::size_t value = 0;
  EvalReport report;
};

struct SweepReport {
  std::string param;  // "d" or "l"
  std::vector<SweepPoint> points;
  ExperimentConfig config;  // base config; each point overrides the swept field
};

// Hyperparameter sweep on one dataset: param "d" covers {8,16,32,64,128},
// "l" covers {2,4,6,8,10}; anything else raises ConfigError. Every point
// rebuilds its dataset from the same events, so an l change reshapes the
// searched contexts while the raw log stays fixed.
SweepReport run_sweep(const SynthConfig& synth, const ExperimentConfig& cfg,
                      const std::string& param);
SweepReport run_sweep(const std::vector<FeedbackEvent>& events,
                      const ExperimentConfig& cfg, const std::string& param);

std::string to_json(const SweepReport& report);
std::string to_csv(const SweepReport& report);

}  // namespace tem4ctr::harness
