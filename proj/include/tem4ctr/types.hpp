#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace tem4ctr {

// One impression from the raw multi-feedback log.
struct FeedbackEvent {
  std::int64_t user = 0;
  std::int64_t item = 0;
  std::int64_t category = 0;
  std::int64_t ts = 0;
  bool clicked = false;
  std::optional<std::vector<double>> feature;  // dense feature, fixed length per dataset

  bool operator==(const FeedbackEvent&) const = default;
};

// Item occurrence as carried inside samples and contexts.
struct ItemRecord {
  std::int64_t item = 0;
  std::int64_t category = 0;
  std::int64_t ts = 0;
  std::optional<std::vector<double>> feature;

  bool operator==(const ItemRecord&) const = default;
};

// The unclicked exposures temporally nearest to one click. `items` is the
// valid prefix of a fixed-capacity slot array and stays in ascending
// timestamp order; mask() materializes the slot-validity view.
struct ExposureContext {
  std::int64_t click_ts = 0;
  std::size_t capacity = 0;
  std::vector<ItemRecord> items;

  std::size_t count() const { return items.size(); }
  std::vector<std::uint8_t> mask() const {
    std::vector<std::uint8_t> m(capacity, 0);
    for (std::size_t i = 0; i < items.size() && i < capacity; ++i) m[i] = 1;
    return m;
  }

  bool operator==(const ExposureContext&) const = default;
};

// All events of one user, stably sorted by timestamp (ties keep file order).
struct UserStream {
  std::int64_t user = 0;
  std::vector<FeedbackEvent> events;
  std::vector<std::size_t> clicked_idx;    // positions into events
  std::vector<std::size_t> unclicked_idx;  // positions into events
};

// Supervised sample: a click history, per-click exposure contexts once the
// temporal search has run, and a target item with its click label.
// pooled_context carries the sequence-level exposure pool consumed by the
// no-alignment model variant.
struct TrainingSample {
  std::int64_t user = 0;
  std::vector<ItemRecord> history;  // oldest..newest, length <= n
  std::vector<ExposureContext> contexts;
  std::optional<ExposureContext> pooled_context;
  ItemRecord target;
  bool label = false;

  bool operator==(const TrainingSample&) const = default;
};

}  // namespace tem4ctr
