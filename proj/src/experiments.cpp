#include "tem4ctr/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "report_json.hpp"
#include "tem4ctr/metrics.hpp"

namespace tem4ctr::harness {

namespace {

constexpr model::Variant kAblateOrder[] = {
    model::Variant::Full, model::Variant::NoStm, model::Variant::NoPem,
    model::Variant::NoIem, model::Variant::AvgPoolDnn};
constexpr std::size_t kNumVariants = 5;

// nlohmann's shortest-round-trip double printer, reused for CSV so both
// report forms agree byte for byte on every number.
std::string fmt(double v) { return nlohmann::json(v).dump(); }

}  // namespace

std::size_t worker_threads() {
  const char* env = std::getenv("TEM4CTR_THREADS");
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("TEM4CTR_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) return;
  const std::size_t workers = std::min(worker_threads(), jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  const auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

// Shared ablation core: events_for(k) supplies the log for seed index k.
AblateReport ablate_impl(const std::function<std::vector<FeedbackEvent>(std::size_t)>& events_for,
                         const ExperimentConfig& cfg, std::size_t num_seeds) {
  cfg.validate();
  if (num_seeds == 0) throw ConfigError("ablate requires at least one seed");

  std::vector<ExperimentConfig> seed_cfgs(num_seeds, cfg);
  std::vector<feedlog::SampleFile> datasets(num_seeds);
  for (std::size_t k = 0; k < num_seeds; ++k) {
    seed_cfgs[k].seed = cfg.seed + k;
    datasets[k] = build_dataset(events_for(k), seed_cfgs[k]);
  }

  const std::size_t jobs = num_seeds * kNumVariants;
  std::vector<EvalReport> reports(jobs);
  parallel_for(jobs, [&](std::size_t j) {
    const std::size_t k = j / kNumVariants;
    ExperimentConfig c = seed_cfgs[k];
    c.variant = kAblateOrder[j % kNumVariants];
    reports[j] = run_training(datasets[k], c).report;
  });

  AblateReport out;
  out.num_seeds = num_seeds;
  out.config = cfg;
  for (std::size_t v = 0; v < kNumVariants; ++v) {
    AblateRow row;
    row.variant = kAblateOrder[v];
    const bool is_base = row.variant == model::Variant::AvgPoolDnn;
    double auc_sum = 0.0;
    double rela_sum = 0.0;
    for (std::size_t k = 0; k < num_seeds; ++k) {
      EvalReport& r = reports[k * kNumVariants + v];
      if (!is_base) {
        const double base = reports[k * kNumVariants + (kNumVariants - 1)].auc;
        r.rela_impr_vs_base = rela_impr(r.auc, base);
        rela_sum += *r.rela_impr_vs_base;
      }
      row.aucs.push_back(r.auc);
      auc_sum += r.auc;
    }
    row.mean_auc = auc_sum / static_cast<double>(num_seeds);
    double var = 0.0;
    for (const double a : row.aucs) var += (a - row.mean_auc) * (a - row.mean_auc);
    row.std_auc = std::sqrt(var / static_cast<double>(num_seeds));
    if (!is_base) row.mean_rela_impr = rela_sum / static_cast<double>(num_seeds);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

AblateReport run_ablate(const SynthConfig& synth, const ExperimentConfig& cfg,
                        std::size_t num_seeds) {
  return ablate_impl(
      [&](std::size_t k) {
        SynthConfig s = synth;
        s.seed = synth.seed + k;
        return gen_synthetic(s);
      },
      cfg, num_seeds);
}

AblateReport run_ablate(const std::vector<FeedbackEvent>& events,
                        const ExperimentConfig& cfg, std::size_t num_seeds) {
  return ablate_impl([&](std::size_t) { return events; }, cfg, num_seeds);
}

std::string to_json(const AblateReport& report) {
  nlohmann::ordered_json j;
  j["study"] = "ablate";
  j["num_seeds"] = report.num_seeds;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const AblateRow& row : report.rows) {
    nlohmann::ordered_json r;
    r["variant"] = model::to_string(row.variant);
    r["mean_auc"] = row.mean_auc;
    r["std_auc"] = row.std_auc;
    if (row.mean_rela_impr) r["mean_rela_impr"] = *row.mean_rela_impr;
    r["aucs"] = row.aucs;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  j["config"] = config_json(report.config);
  return j.dump(2);
}

std::string to_csv(const AblateReport& report) {
  std::string out = "variant,mean_auc,std_auc,mean_rela_impr\n";
  for (const AblateRow& row : report.rows) {
    out += model::to_string(row.variant);
    out += ',';
    out += fmt(row.mean_auc);
    out += ',';
    out += fmt(row.std_auc);
    out += ',';
    if (row.mean_rela_impr) out += fmt(*row.mean_rela_impr);
    out += '\n';
  }
  return out;
}

namespace {

SweepReport sweep_impl(const std::vector<FeedbackEvent>& events, const ExperimentConfig& cfg,
                       const std::string& param) {
  cfg.validate();
  std::vector<std::size_t> values;
  if (param == "d") values = {8, 16, 32, 64, 128};
  else if (param == "l") values = {2, 4, 6, 8, 10};
  else throw ConfigError("sweep param must be 'd' or 'l', got '" + param + "'");

  std::vector<ExperimentConfig> cfgs(values.size(), cfg);
  std::vector<feedlog::SampleFile> datasets(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (param == "d") cfgs[i].d = values[i];
    else cfgs[i].l = values[i];
    datasets[i] = build_dataset(events, cfgs[i]);
  }

  std::vector<EvalReport> reports(values.size());
  parallel_for(values.size(),
               [&](std::size_t i) { reports[i] = run_training(datasets[i], cfgs[i]).report; });

  SweepReport out;
  out.param = param;
  out.config = cfg;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.points.push_back({values[i], std::move(reports[i])});
  return out;
}

}  // namespace

SweepReport run_sweep(const SynthConfig& synth, const ExperimentConfig& cfg,
                      const std::string& param) {
  return sweep_impl(gen_synthetic(synth), cfg, param);
}

SweepReport run_sweep(const std::vector<FeedbackEvent>& events, const ExperimentConfig& cfg,
                      const std::string& param) {
  return sweep_impl(events, cfg, param);
}

std::string to_json(const SweepReport& report) {
  nlohmann::ordered_json j;
  j["study"] = "sweep";
  j["param"] = report.param;
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const SweepPoint& p : report.points) {
    nlohmann::ordered_json e;
    e["value"] = p.value;
    e["report"] = report_json(p.report);
    pts.push_back(std::move(e));
  }
  j["points"] = std::move(pts);
  j["config"] = config_json(report.config);
  return j.dump(2);
}

std::string to_csv(const SweepReport& report) {
  std::string out = "param,value,auc\n";
  for (const SweepPoint& p : report.points) {
    out += report.param;
    out += ',';
    out += std::to_string(p.value);
    out += ',';
    out += fmt(p.report.auc);
    out += '\n';
  }
  return out;
}

}  // namespace tem4ctr::harness
