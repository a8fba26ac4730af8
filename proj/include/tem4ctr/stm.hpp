#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tem4ctr/common.hpp"
#include "tem4ctr/types.hpp"

namespace tem4ctr::stm {

struct SearchOptions {
  bool per_side = false;   // take up to l from each side instead of l total
  bool past_only = false;  // restrict to exposures with ts <= click_ts
};

// Finds the unclicked exposures temporally nearest to a click. `unclicked`
// must be sorted ascending by ts with equal timestamps in file order (the
// build_streams layout). Nearness ranks by (|ts - click_ts|, ts, position),
// so an earlier timestamp wins a distance tie and file order breaks exact
// ties. Runs as a two-pointer expansion from the insertion point, O(log m + l).
// The returned items are in ascending timestamp order.
ExposureContext search_context(std::int64_t click_ts,
                               std::span<const ItemRecord> unclicked,
                               std::size_t l,
                               const SearchOptions& opts = {});

struct PreprocessOptions {
  std::size_t l = 10;
  bool per_side = false;
  bool past_only = false;
  // Capacity of the sequence-level exposure pool attached for the
  // no-alignment variant; 0 skips the pool.
  std::size_t pool_capacity = 0;
};

// Attaches one ExposureContext per history click to every sample, searching
// the click's own user stream. A sample referencing a user absent from
// `streams` raises IntegrityError. When pool_capacity > 0 also attaches the
// sequence-level pool anchored at the last history click.
void preprocess_dataset(const std::vector<UserStream>& streams,
                        std::vector<TrainingSample>& samples,
                        const PreprocessOptions& opts);

}  // namespace tem4ctr::stm
