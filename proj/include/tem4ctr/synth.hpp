#pragma once

#include <cstdint>
#include <vector>

#include "tem4ctr/common.hpp"
#include "tem4ctr/types.hpp"

namespace tem4ctr::harness {

// Synthetic multi-feedback log. Each user's latent interest drifts with the
// time elapsed between sessions; a session ranks a random candidate slate
// against the interest, the user clicks a temperature-scaled pick (or, some
// of the time, misclicks an item the slate never favored), and the slate's
// runners-up are shown around the click as unclicked impressions. Those
// same-session rejects are what temporal context search should retrieve:
// informative about the local interest, strictly worse than the click on
// average, hard negatives once sampled, and the only witnesses that can
// disavow a misclick. With probability 1 - context_signal_strength an
// impression slot is uniform noise instead; at 0 the unclicked stream
// carries no signal at all. Sessions are tight timestamp bursts separated by
// long gaps, with per-user inter-arrival rates spanning orders of magnitude,
// so wall-clock distance carries no fixed meaning across users.
struct SynthConfig {
  std::size_t num_users = 500;
  std::size_t num_items = 400;
  std::size_t num_categories = 12;
  std::size_t latent_dim = 8;
  std::size_t events_per_user = 50;
  double exposure_rate = 0.75;      // expected unclicked share of the stream
  double click_temperature = 0.35;  // softmax temperature for click choices
  double context_signal_strength = 0.8;
  std::uint64_t seed = 1;
};

// Deterministic per (config, seed), byte for byte. Emits exactly
// num_users * events_per_user events grouped by user in timestamp order.
std::vector<FeedbackEvent> gen_synthetic(const SynthConfig& cfg);

}  // namespace tem4ctr::harness
