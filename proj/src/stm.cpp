#include "tem4ctr/stm.hpp"

#include <algorithm>
#include <map>

namespace tem4ctr::stm {

namespace {

// Positions of the `budget` events nearest to click_ts among ev[0, limit),
// honoring the (|dt|, ts, position) ranking. `limit` trims the future side
// for past-only searches. Equal-timestamp runs need care: they share one
// distance, so when the budget runs out inside a run the run's earliest
// positions win, which a plain pointer walk from the insertion point would
// get backwards on the past side.
std::vector<std::size_t> select_nearest(std::span<const ItemRecord> ev, std::int64_t click_ts,
                                        std::size_t budget, std::size_t limit) {
  std::vector<std::size_t> picked;
  if (budget == 0 || limit == 0) return picked;
  picked.reserve(std::min(budget, limit));

  // Insertion point: first position with ts > click_ts.
  std::size_t ip = static_cast<std::size_t>(
      std::upper_bound(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(limit), click_ts,
                       [](std::int64_t t, const ItemRecord& r) { return t < r.ts; }) -
      ev.begin());

  std::size_t li = ip;     // past side is [0, li)
  std::size_t ri = ip;     // future side is [ri, limit)
  std::size_t left = budget;
  while (left > 0 && (li > 0 || ri < limit)) {
    const bool has_l = li > 0;
    const bool has_r = ri < limit;
    const std::int64_t dl = has_l ? click_ts - ev[li - 1].ts : 0;
    const std::int64_t dr = has_r ? ev[ri].ts - click_ts : 0;
    if (has_l && (!has_r || dl <= dr)) {
      // Consume the whole equal-ts run ending at li-1, or its file-order
      // head when the budget is smaller than the run.
      const std::int64_t run_ts = ev[li - 1].ts;
      std::size_t s = static_cast<std::size_t>(
          std::lower_bound(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(li), run_ts,
                           [](const ItemRecord& r, std::int64_t t) { return r.ts < t; }) -
          ev.begin());
      const std::size_t run_len = li - s;
      const std::size_t take = std::min(run_len, left);
      for (std::size_t p = s; p < s + take; ++p) picked.push_back(p);
      left -= take;
      li = s;
    } else {
      // Future-side ties already sit in file order, so a forward slice of
      // the run is exactly its rank order.
      const std::int64_t run_ts = ev[ri].ts;
      std::size_t e = static_cast<std::size_t>(
          std::upper_bound(ev.begin() + static_cast<std::ptrdiff_t>(ri),
                           ev.begin() + static_cast<std::ptrdiff_t>(limit), run_ts,
                           [](std::int64_t t, const ItemRecord& r) { return t < r.ts; }) -
          ev.begin());
      const std::size_t take = std::min(e - ri, left);
      for (std::size_t p = ri; p < ri + take; ++p) picked.push_back(p);
      left -= take;
      ri += take;
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::size_t past_limit(std::span<const ItemRecord> ev, std::int64_t click_ts) {
  return static_cast<std::size_t>(
      std::upper_bound(ev.begin(), ev.end(), click_ts,
                       [](std::int64_t t, const ItemRecord& r) { return t < r.ts; }) -
      ev.begin());
}

}  // namespace

ExposureContext search_context(std::int64_t click_ts, std::span<const ItemRecord> unclicked,
                               std::size_t l, const SearchOptions& opts) {
  ExposureContext ctx;
  ctx.click_ts = click_ts;

  std::vector<std::size_t> picked;
  if (opts.per_side && !opts.past_only) {
    ctx.capacity = 2 * l;
    const std::size_t ip = past_limit(unclicked, click_ts);
    picked = select_nearest(unclicked, click_ts, l, ip);
    // Future side: restrict to [ip, m) by searching the subspan and
    // shifting positions back.
    auto future = unclicked.subspan(ip);
    for (std::size_t p : select_nearest(future, click_ts, l, future.size()))
      picked.push_back(p + ip);
  } else {
    ctx.capacity = l;
    const std::size_t limit =
        opts.past_only ? past_limit(unclicked, click_ts) : unclicked.size();
    picked = select_nearest(unclicked, click_ts, l, limit);
  }

  ctx.items.reserve(picked.size());
  for (std::size_t p : picked) ctx.items.push_back(unclicked[p]);
  return ctx;
}

void preprocess_dataset(const std::vector<UserStream>& streams,
                        std::vector<TrainingSample>& samples,
                        const PreprocessOptions& opts) {
  // Materialize each user's unclicked records once.
  std::map<std::int64_t, std::vector<ItemRecord>> unclicked;
  for (const auto& s : streams) {
    auto& list = unclicked[s.user];
    list.reserve(s.unclicked_idx.size());
    for (std::size_t i : s.unclicked_idx) {
      const auto& ev = s.events[i];
      list.push_back(ItemRecord{ev.item, ev.category, ev.ts, ev.feature});
    }
  }

  const SearchOptions search{opts.per_side, opts.past_only};
  for (auto& sample : samples) {
    auto it = unclicked.find(sample.user);
    if (it == unclicked.end())
      throw IntegrityError("sample references unknown user " + std::to_string(sample.user));
    const auto& pool = it->second;

    sample.contexts.clear();
    sample.contexts.reserve(sample.history.size());
    for (const auto& click : sample.history)
      sample.contexts.push_back(search_context(click.ts, pool, opts.l, search));

    if (opts.pool_capacity > 0 && !sample.history.empty()) {
      SearchOptions pooled = search;
      pooled.per_side = false;  // the pool budget is a single total
      sample.pooled_context =
          search_context(sample.history.back().ts, pool, opts.pool_capacity, pooled);
    }
  }
}

}  // namespace tem4ctr::stm
