#include "tem4ctr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace tem4ctr::harness {

namespace {

// Interest drift between sessions: z' = rho * z + sqrt(1 - rho^2) * noise,
// with rho = exp(-gap / kDriftTau) so interest wanders with elapsed time.
// Rapid-fire users keep coherent interests while long-gap users return
// wanting something else entirely.
constexpr double kDriftTau = 1200.0;
// Ranked candidates scored per session; the user clicks one of them.
constexpr std::size_t kCandidates = 12;
// Session slates are popularity biased (Zipf over item ids), the way a
// production candidate generator is; junk impressions stay uniform.
constexpr double kSlateZipf = 1.1;
// Item latent spread around its category centroid.
constexpr double kItemSpread = 0.35;
// Per-user mean inter-arrival gap (seconds), log-uniform across users.
constexpr double kGapMin = 2.0;
constexpr double kGapMax = 600.0;
// Session boundaries are far apart relative to in-session bursts, so the
// temporally nearest exposures around a click are its own session's.
constexpr double kSessionGapScale = 5.0;
constexpr double kIntraGapScale = 0.05;
// Fraction of clicks that ignore the slate ranking entirely (misclicks,
// clickbait). The impressions around such a click still reflect the interest
// that produced the slate, so the context disavows the clicked item.
constexpr double kMisclickRate = 0.15;

using Vec = std::vector<double>;

void normalize(Vec& v) {
  double q = 0.0;
  for (double x : v) q += x * x;
  const double inv = 1.0 / std::sqrt(std::max(q, 1e-30));
  for (double& x : v) x *= inv;
}

Vec unit_gaussian(Rng& rng, std::size_t k) {
  Vec v(k);
  for (double& x : v) x = rng.normal();
  normalize(v);
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec walk(Rng& rng, const Vec& z, double rho) {
  Vec out(z.size());
  const double w = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = rho * z[i] + w * rng.normal();
  normalize(out);
  return out;
}

// Unclicked exposures shown in one session: geometric with mean
// exposure_rate / (1 - exposure_rate), so clicks make up a
// (1 - exposure_rate) share of the stream in expectation.
std::size_t session_exposures(Rng& rng, double exposure_rate, std::size_t cap) {
  if (exposure_rate <= 0.0 || cap == 0) return 0;
  const double u = rng.uniform();
  const double k = std::floor(std::log(1.0 - u) / std::log(exposure_rate));
  return std::min(static_cast<std::size_t>(k), cap);
}

std::int64_t gap(Rng& rng, double mean) {
  return static_cast<std::int64_t>(std::llround(-mean * std::log(1.0 - rng.uniform())));
}

}  // namespace

std::vector<FeedbackEvent> gen_synthetic(const SynthConfig& cfg) {
  if (cfg.num_users == 0 || cfg.num_items == 0 || cfg.num_categories == 0 ||
      cfg.latent_dim == 0 || cfg.events_per_user == 0)
    throw ConfigError("gen_synthetic: all sizes must be positive");
  if (cfg.exposure_rate < 0.0 || cfg.exposure_rate >= 1.0)
    throw ConfigError("gen_synthetic: exposure_rate must be in [0, 1)");
  if (cfg.context_signal_strength < 0.0 || cfg.context_signal_strength > 1.0)
    throw ConfigError("gen_synthetic: context_signal_strength must be in [0, 1]");
  if (cfg.click_temperature <= 0.0)
    throw ConfigError("gen_synthetic: click_temperature must be positive");

  // Catalog: category centroids with items scattered around them.
  Rng world(cfg.seed, 0xCA7A106ull);
  std::vector<Vec> centroids(cfg.num_categories);
  for (auto& c : centroids) c = unit_gaussian(world, cfg.latent_dim);
  std::vector<std::int64_t> item_cat(cfg.num_items);
  std::vector<Vec> item_vec(cfg.num_items);
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    item_cat[i] = static_cast<std::int64_t>(world.below(cfg.num_categories));
    Vec v = centroids[static_cast<std::size_t>(item_cat[i])];
    for (double& x : v) x += kItemSpread * world.normal();
    normalize(v);
    item_vec[i] = std::move(v);
  }

  // Popularity CDF for slate draws.
  std::vector<double> slate_cdf(cfg.num_items);
  double slate_mass = 0.0;
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    slate_mass += 1.0 / std::pow(static_cast<double>(i + 1), kSlateZipf);
    slate_cdf[i] = slate_mass;
  }
  const auto slate_draw = [&](Rng& rng) {
    const auto it = std::lower_bound(slate_cdf.begin(), slate_cdf.end(),
                                     rng.uniform() * slate_mass);
    const auto i = static_cast<std::size_t>(it - slate_cdf.begin());
    return std::min(i, cfg.num_items - 1);
  };

  std::vector<FeedbackEvent> events;
  events.reserve(cfg.num_users * cfg.events_per_user);

  // Session scratch, reused across users.
  std::vector<std::size_t> cand(kCandidates);
  std::vector<double> score(kCandidates);
  std::vector<std::size_t> ranked(kCandidates);
  std::vector<std::size_t> session_items;

  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    Rng rng(cfg.seed, 2 * u + 1);
    const double gap_mean = std::exp(rng.uniform(std::log(kGapMin), std::log(kGapMax)));
    std::int64_t t = rng.range(0, 999);
    Vec z = unit_gaussian(rng, cfg.latent_dim);

    std::size_t left = cfg.events_per_user;
    while (left > 0) {
      const std::int64_t session_gap = gap(rng, gap_mean * kSessionGapScale);
      z = walk(rng, z, std::exp(-static_cast<double>(session_gap) / kDriftTau));

      // Rank a candidate slate against the session interest. The click is a
      // temperature-scaled pick, so it is usually but not always the best
      // candidate; the runners-up become the impressions shown around it.
      for (std::size_t c = 0; c < kCandidates; ++c) {
        cand[c] = slate_draw(rng);
        score[c] = dot(item_vec[cand[c]], z);
      }
      double mx = score[0];
      for (std::size_t c = 1; c < kCandidates; ++c) mx = std::max(mx, score[c]);
      double zsum = 0.0;
      for (std::size_t c = 0; c < kCandidates; ++c)
        zsum += std::exp((score[c] - mx) / cfg.click_temperature);
      double draw = rng.uniform() * zsum;
      std::size_t clicked = kCandidates - 1;
      for (std::size_t c = 0; c < kCandidates; ++c) {
        draw -= std::exp((score[c] - mx) / cfg.click_temperature);
        if (draw <= 0.0) {
          clicked = c;
          break;
        }
      }
      std::size_t click_item = cand[clicked];
      if (rng.uniform() < kMisclickRate) click_item = slate_draw(rng);
      for (std::size_t c = 0; c < kCandidates; ++c) ranked[c] = c;
      for (std::size_t a = 1; a < kCandidates; ++a)  // insertion sort, best first
        for (std::size_t b = a; b > 0 && score[ranked[b]] > score[ranked[b - 1]]; --b)
          std::swap(ranked[b], ranked[b - 1]);

      const std::size_t n_expo = session_exposures(rng, cfg.exposure_rate, left - 1);

      // Lay the session out in time order: the click lands at a uniform
      // position among its impressions, which fill with the best rejected
      // candidates (cycling past the slate if the session is long) or, when
      // the planted signal is dialed down, with uniform noise.
      session_items.clear();
      const std::size_t click_pos = static_cast<std::size_t>(rng.below(n_expo + 1));
      std::size_t next_rejected = 0;
      for (std::size_t s = 0; s < n_expo + 1; ++s) {
        if (s == click_pos) {
          session_items.push_back(click_item);
          continue;
        }
        if (rng.uniform() < cfg.context_signal_strength) {
          std::size_t r = ranked[next_rejected % kCandidates];
          if (r == clicked) r = ranked[(++next_rejected) % kCandidates];
          ++next_rejected;
          session_items.push_back(cand[r]);
        } else {
          session_items.push_back(static_cast<std::size_t>(rng.below(cfg.num_items)));
        }
      }

      t += session_gap;
      for (std::size_t s = 0; s < session_items.size(); ++s) {
        if (s > 0) t += gap(rng, gap_mean * kIntraGapScale);
        FeedbackEvent ev;
        ev.user = static_cast<std::int64_t>(u);
        ev.item = static_cast<std::int64_t>(session_items[s]);
        ev.category = item_cat[session_items[s]];
        ev.ts = t;
        ev.clicked = s == click_pos;
        events.push_back(std::move(ev));
      }
      left -= session_items.size();
    }
  }
  return events;
}

}  // namespace tem4ctr::harness
