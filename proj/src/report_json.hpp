#pragma once

// Internal JSON assembly shared by the trainer and the experiment runners.
// Key order is fixed so identical runs serialize byte for byte.

#include <json.hpp>

#include "tem4ctr/train.hpp"

namespace tem4ctr::harness {

inline nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["n"] = cfg.n;
  j["l"] = cfg.l;
  j["d"] = cfg.d;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["samples_per_user"] = cfg.samples_per_user;
  j["seed"] = cfg.seed;
  j["variant"] = model::to_string(cfg.variant);
  j["iem_kind"] = model::to_string(cfg.iem_kind);
  j["iem_plain_concat"] = cfg.iem_plain_concat;
  j["per_side"] = cfg.per_side;
  j["past_only"] = cfg.past_only;
  j["scorer_h1"] = cfg.scorer_h1;
  j["scorer_h2"] = cfg.scorer_h2;
  j["head_h1"] = cfg.head_h1;
  j["head_h2"] = cfg.head_h2;
  return j;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["auc"] = r.auc;
  if (r.rela_impr_vs_base) j["rela_impr_vs_base"] = *r.rela_impr_vs_base;
  j["loss_curve"] = r.loss_curve;
  j["train_samples"] = r.train_samples;
  j["test_samples"] = r.test_samples;
  j["seed"] = r.seed;
  j["config"] = config_json(r.config);
  return j;
}

}  // namespace tem4ctr::harness
