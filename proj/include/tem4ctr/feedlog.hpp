#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tem4ctr/common.hpp"
#include "tem4ctr/types.hpp"

namespace tem4ctr::feedlog {

// JSON-lines feedback log:
//   {"user":3,"item":17,"cat":2,"ts":1699999999,"click":1,"feat":[0.1,0.2]}
// `feat` is optional but must have the same length on every line that
// carries it. Malformed lines raise ParseError with a 1-based line number;
// inconsistent dense-feature lengths raise SchemaError.
std::vector<FeedbackEvent> parse_events(std::istream& in);
std::vector<FeedbackEvent> parse_events_file(const std::string& path);

std::string serialize_event(const FeedbackEvent& e);
void write_events(std::ostream& out, const std::vector<FeedbackEvent>& events);
void write_events_file(const std::string& path, const std::vector<FeedbackEvent>& events);

// Groups events per user and stably sorts each stream by timestamp, so
// equal-timestamp events keep their file order. Streams come back in
// ascending user id order and record the clicked/unclicked partition.
std::vector<UserStream> build_streams(std::vector<FeedbackEvent> events);

struct SampleOptions {
  std::size_t n = 30;             // history truncation: keep the n most recent clicks
  std::size_t samples_per_user = 4;
  std::uint64_t seed = 1;
};

// Builds training pairs. Per user with at least two clicks, draws
// samples_per_user click-subsequence endpoints (without replacement when the
// user has fewer eligible endpoints). Each endpoint yields one positive
// (history = preceding clicks, target = endpoint click) and, when the user
// has unclicked exposures, one paired negative whose target is drawn
// uniformly from them. Deterministic given (streams, options); per-user
// processing is order independent.
std::vector<TrainingSample> make_training_samples(const std::vector<UserStream>& streams,
                                                  const SampleOptions& opts);

// One positive per eligible user: full click history against the final
// click, plus at most one negative sharing the same history.
std::vector<TrainingSample> make_test_samples(const std::vector<UserStream>& streams,
                                              std::size_t n, std::uint64_t seed);

// Preprocessed sample file: a meta header line followed by one JSON object
// per sample with the context items inlined.
struct SampleFileMeta {
  std::int64_t num_items = 0;  // vocab bound: max id + 1
  std::int64_t num_cats = 0;
  std::size_t dense_dim = 0;
  std::size_t n = 30;
  std::size_t l = 10;
  bool per_side = false;
  bool past_only = false;
};

struct SampleFile {
  SampleFileMeta meta;
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> test;
};

void write_samples(std::ostream& out, const SampleFile& file);
void write_samples_file(const std::string& path, const SampleFile& file);
SampleFile read_samples(std::istream& in);
SampleFile read_samples_file(const std::string& path);

// Vocabulary bounds (max id + 1) and the dense-feature width seen in a log.
SampleFileMeta scan_vocab(const std::vector<FeedbackEvent>& events);

}  // namespace tem4ctr::feedlog
