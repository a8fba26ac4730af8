#include "tem4ctr/feedlog.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace tem4ctr::feedlog {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kTrainStreamSalt = 0x7261696eull;
constexpr std::uint64_t kTestStreamSalt = 0x7465737eull;

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

std::int64_t require_int(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) fail_line(line_no, std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) fail_line(line_no, std::string("field '") + key + "' must be an integer");
  return it->get<std::int64_t>();
}

FeedbackEvent parse_line(const std::string& line, std::size_t line_no,
                         std::size_t& dense_dim, bool& dense_seen) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail_line(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail_line(line_no, "event must be a JSON object");

  FeedbackEvent ev;
  ev.user = require_int(j, "user", line_no);
  ev.item = require_int(j, "item", line_no);
  ev.category = require_int(j, "cat", line_no);
  ev.ts = require_int(j, "ts", line_no);
  if (ev.user < 0 || ev.item < 0 || ev.category < 0)
    fail_line(line_no, "ids must be non-negative");
  if (ev.ts < 0) fail_line(line_no, "ts must be non-negative");

  std::int64_t click = require_int(j, "click", line_no);
  if (click != 0 && click != 1) fail_line(line_no, "click not in {0,1}");
  ev.clicked = click == 1;

  if (auto it = j.find("feat"); it != j.end()) {
    if (!it->is_array()) fail_line(line_no, "field 'feat' must be an array of numbers");
    std::vector<double> feat;
    feat.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) fail_line(line_no, "field 'feat' must be an array of numbers");
      feat.push_back(v.get<double>());
    }
    if (!dense_seen) {
      dense_seen = true;
      dense_dim = feat.size();
    } else if (feat.size() != dense_dim) {
      throw SchemaError("line " + std::to_string(line_no) + ": dense feature length " +
                        std::to_string(feat.size()) + " != " + std::to_string(dense_dim));
    }
    ev.feature = std::move(feat);
  }
  return ev;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

ordered_json item_to_json(const ItemRecord& r) {
  ordered_json j;
  j["item"] = r.item;
  j["cat"] = r.category;
  j["ts"] = r.ts;
  if (r.feature) j["feat"] = *r.feature;
  return j;
}

ItemRecord item_from_json(const json& j) {
  ItemRecord r;
  r.item = j.at("item").get<std::int64_t>();
  r.category = j.at("cat").get<std::int64_t>();
  r.ts = j.at("ts").get<std::int64_t>();
  if (auto it = j.find("feat"); it != j.end()) r.feature = it->get<std::vector<double>>();
  return r;
}

ordered_json context_to_json(const ExposureContext& c) {
  ordered_json j;
  j["click_ts"] = c.click_ts;
  j["capacity"] = c.capacity;
  ordered_json items = ordered_json::array();
  for (const auto& it : c.items) items.push_back(item_to_json(it));
  j["items"] = std::move(items);
  return j;
}

ExposureContext context_from_json(const json& j) {
  ExposureContext c;
  c.click_ts = j.at("click_ts").get<std::int64_t>();
  c.capacity = j.at("capacity").get<std::size_t>();
  for (const auto& it : j.at("items")) c.items.push_back(item_from_json(it));
  return c;
}

ItemRecord record_of(const FeedbackEvent& ev) {
  return ItemRecord{ev.item, ev.category, ev.ts, ev.feature};
}

}  // namespace

std::vector<FeedbackEvent> parse_events(std::istream& in) {
  std::vector<FeedbackEvent> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dense_dim = 0;
  bool dense_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    out.push_back(parse_line(line, line_no, dense_dim, dense_seen));
  }
  return out;
}

std::vector<FeedbackEvent> parse_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open events file: " + path);
  return parse_events(in);
}

std::string serialize_event(const FeedbackEvent& e) {
  ordered_json j;
  j["user"] = e.user;
  j["item"] = e.item;
  j["cat"] = e.category;
  j["ts"] = e.ts;
  j["click"] = e.clicked ? 1 : 0;
  if (e.feature) j["feat"] = *e.feature;
  return j.dump();
}

void write_events(std::ostream& out, const std::vector<FeedbackEvent>& events) {
  for (const auto& e : events) out << serialize_event(e) << '\n';
}

void write_events_file(const std::string& path, const std::vector<FeedbackEvent>& events) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  write_events(out, events);
}

std::vector<UserStream> build_streams(std::vector<FeedbackEvent> events) {
  std::map<std::int64_t, UserStream> by_user;
  for (auto& ev : events) {
    auto& s = by_user[ev.user];
    s.user = ev.user;
    s.events.push_back(std::move(ev));
  }
  std::vector<UserStream> out;
  out.reserve(by_user.size());
  for (auto& [user, s] : by_user) {
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const FeedbackEvent& a, const FeedbackEvent& b) { return a.ts < b.ts; });
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      (s.events[i].clicked ? s.clicked_idx : s.unclicked_idx).push_back(i);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// History for a subsequence ending right before click position `end`
// (exclusive), truncated to the n most recent clicks.
std::vector<ItemRecord> history_of(const UserStream& s, std::size_t end, std::size_t n) {
  std::size_t begin = end > n ? end - n : 0;
  std::vector<ItemRecord> h;
  h.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) h.push_back(record_of(s.events[s.clicked_idx[i]]));
  return h;
}

}  // namespace

std::vector<TrainingSample> make_training_samples(const std::vector<UserStream>& streams,
                                                  const SampleOptions& opts) {
  std::vector<TrainingSample> out;
  for (const auto& s : streams) {
    const std::size_t clicks = s.clicked_idx.size();
    if (clicks < 2) continue;
    Rng rng(opts.seed, static_cast<std::uint64_t>(s.user) * 2 + kTrainStreamSalt);

    // Candidate subsequence endpoints: 2..clicks, drawn without replacement.
    std::vector<std::size_t> ends(clicks - 1);
    for (std::size_t i = 0; i < ends.size(); ++i) ends[i] = i + 2;
    const std::size_t take = std::min(opts.samples_per_user, ends.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(ends.size() - i));
      std::swap(ends[i], ends[j]);
    }
    std::sort(ends.begin(), ends.begin() + static_cast<std::ptrdiff_t>(take));

    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t end = ends[i];
      TrainingSample pos;
      pos.user = s.user;
      pos.history = history_of(s, end - 1, opts.n);
      pos.target = record_of(s.events[s.clicked_idx[end - 1]]);
      pos.label = true;
      out.push_back(pos);

      if (!s.unclicked_idx.empty()) {
        TrainingSample neg;
        neg.user = s.user;
        neg.history = pos.history;
        std::size_t pick = static_cast<std::size_t>(rng.below(s.unclicked_idx.size()));
        neg.target = record_of(s.events[s.unclicked_idx[pick]]);
        neg.label = false;
        out.push_back(std::move(neg));
      }
    }
  }
  return out;
}

std::vector<TrainingSample> make_test_samples(const std::vector<UserStream>& streams,
                                              std::size_t n, std::uint64_t seed) {
  std::vector<TrainingSample> out;
  for (const auto& s : streams) {
    const std::size_t clicks = s.clicked_idx.size();
    if (clicks < 2) continue;
    Rng rng(seed, static_cast<std::uint64_t>(s.user) * 2 + kTestStreamSalt);

    TrainingSample pos;
    pos.user = s.user;
    pos.history = history_of(s, clicks - 1, n);
    pos.target = record_of(s.events[s.clicked_idx[clicks - 1]]);
    pos.label = true;
    out.push_back(pos);

    if (!s.unclicked_idx.empty()) {
      TrainingSample neg;
      neg.user = s.user;
      neg.history = pos.history;
      std::size_t pick = static_cast<std::size_t>(rng.below(s.unclicked_idx.size()));
      neg.target = record_of(s.events[s.unclicked_idx[pick]]);
      neg.label = false;
      out.push_back(std::move(neg));
    }
  }
  return out;
}

namespace {

ordered_json sample_to_json(const TrainingSample& s, const char* split) {
  ordered_json j;
  j["split"] = split;
  j["user"] = s.user;
  j["label"] = s.label ? 1 : 0;
  j["target"] = item_to_json(s.target);
  ordered_json hist = ordered_json::array();
  for (const auto& it : s.history) hist.push_back(item_to_json(it));
  j["history"] = std::move(hist);
  if (!s.contexts.empty()) {
    ordered_json ctxs = ordered_json::array();
    for (const auto& c : s.contexts) ctxs.push_back(context_to_json(c));
    j["contexts"] = std::move(ctxs);
  }
  if (s.pooled_context) j["pool"] = context_to_json(*s.pooled_context);
  return j;
}

TrainingSample sample_from_json(const json& j, std::string& split) {
  split = j.at("split").get<std::string>();
  TrainingSample s;
  s.user = j.at("user").get<std::int64_t>();
  s.label = j.at("label").get<int>() == 1;
  s.target = item_from_json(j.at("target"));
  for (const auto& it : j.at("history")) s.history.push_back(item_from_json(it));
  if (auto it = j.find("contexts"); it != j.end())
    for (const auto& c : *it) s.contexts.push_back(context_from_json(c));
  if (auto it = j.find("pool"); it != j.end()) s.pooled_context = context_from_json(*it);
  return s;
}

}  // namespace

void write_samples(std::ostream& out, const SampleFile& file) {
  ordered_json meta;
  meta["meta"] = {{"num_items", file.meta.num_items}, {"num_cats", file.meta.num_cats},
                  {"dense_dim", file.meta.dense_dim}, {"n", file.meta.n},
                  {"l", file.meta.l},                 {"per_side", file.meta.per_side},
                  {"past_only", file.meta.past_only}};
  out << meta.dump() << '\n';
  for (const auto& s : file.train) out << sample_to_json(s, "train").dump() << '\n';
  for (const auto& s : file.test) out << sample_to_json(s, "test").dump() << '\n';
}

void write_samples_file(const std::string& path, const SampleFile& file) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  write_samples(out, file);
}

SampleFile read_samples(std::istream& in) {
  SampleFile file;
  std::string line;
  std::size_t line_no = 0;
  bool meta_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail_line(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!meta_seen) {
      auto it = j.find("meta");
      if (it == j.end()) fail_line(line_no, "sample file must start with a meta line");
      file.meta.num_items = it->at("num_items").get<std::int64_t>();
      file.meta.num_cats = it->at("num_cats").get<std::int64_t>();
      file.meta.dense_dim = it->at("dense_dim").get<std::size_t>();
      file.meta.n = it->at("n").get<std::size_t>();
      file.meta.l = it->at("l").get<std::size_t>();
      file.meta.per_side = it->at("per_side").get<bool>();
      file.meta.past_only = it->at("past_only").get<bool>();
      meta_seen = true;
      continue;
    }
    std::string split;
    TrainingSample s = sample_from_json(j, split);
    if (split == "train") {
      file.train.push_back(std::move(s));
    } else if (split == "test") {
      file.test.push_back(std::move(s));
    } else {
      fail_line(line_no, "unknown split '" + split + "'");
    }
  }
  if (!meta_seen) throw ParseError("sample file has no meta line");
  return file;
}

SampleFile read_samples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open samples file: " + path);
  return read_samples(in);
}

SampleFileMeta scan_vocab(const std::vector<FeedbackEvent>& events) {
  SampleFileMeta meta;
  for (const auto& e : events) {
    meta.num_items = std::max(meta.num_items, e.item + 1);
    meta.num_cats = std::max(meta.num_cats, e.category + 1);
    if (e.feature) meta.dense_dim = e.feature->size();
  }
  return meta;
}

}  // namespace tem4ctr::feedlog
