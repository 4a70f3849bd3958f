#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gcegnn::corpus {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawEvent {
  std::string session_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

// Raw item id <-> dense index in [1, m].
class Vocabulary {
 public:
  // Returns the existing index or assigns the next one.
  int intern(const std::string& raw_id);
  std::optional<int> find(std::string_view raw_id) const;
  const std::string& raw_id(int index) const;
  std::size_t size() const { return raw_ids_.size(); }
  // raw_ids()[i] has index i + 1.
  const std::vector<std::string>& raw_ids() const { return raw_ids_; }

 private:
  std::vector<std::string> raw_ids_;
  std::unordered_map<std::string, int> index_;
};

struct Session {
  std::string key;
  std::vector<int> items;
  std::int64_t last_timestamp = 0;
};

struct SessionCorpus {
  std::vector<Session> sessions;
  Vocabulary vocab;

  std::size_t item_count() const { return vocab.size(); }
  std::size_t click_count() const;
};

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct Example {
  std::vector<int> prefix;
  int label = 0;
  Split split = Split::train;

  friend bool operator==(const Example&, const Example&) = default;
};

// Reads `session_id<d>item_id<d>timestamp` lines. A first line whose timestamp
// field is not an integer is treated as a header. Blank lines are skipped.
std::vector<RawEvent> read_events(std::istream& in, char delimiter = ',');

// Groups events by session (sessions in first-seen order), sorts each session
// by timestamp with input order breaking ties, and assigns vocabulary indices
// in first-seen order of the sorted sessions.
SessionCorpus parse_sessions(std::span<const RawEvent> events);

// Drops items seen fewer than `min_item_freq` times, then sessions shorter than
// `min_session_len`, then re-densifies the vocabulary. One pass of each.
SessionCorpus filter_corpus(const SessionCorpus& corpus, std::size_t min_item_freq = 5,
                            std::size_t min_session_len = 2);

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct TemporalSplit {
  SessionCorpus train;
  SessionCorpus test;  // indexed with train.vocab
};

// Sessions whose last timestamp is later than max(last) - test_window go to
// test. Test items unseen in train are stripped and test sessions left with
// fewer than two items are dropped. Both partitions share a vocabulary built
// from the train sessions.
TemporalSplit temporal_split(const SessionCorpus& corpus, std::int64_t test_window = 7 * kSecondsPerDay);

// Every (prefix, next item) pair of every session: n - 1 examples per session.
std::vector<Example> split_sequences(const SessionCorpus& corpus, Split split);

// Relabels a seeded random subset of the train examples as validation.
// The subset has round(fraction * n) examples, and at least one when n >= 2
// and fraction > 0.
void assign_validation(std::vector<Example>& examples, double fraction, std::uint64_t seed);

struct CorpusStats {
  std::size_t clicks = 0;
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::size_t items = 0;
  double average_length = 0.0;
};

CorpusStats compute_stats(const TemporalSplit& split);

// ---- file formats -----------------------------------------------------------

// `prefix indices (space separated) <TAB> label <TAB> split`
void write_examples(std::ostream& out, std::span<const Example> examples);
std::vector<Example> read_examples(std::istream& in);

// `raw_id <TAB> index`
void write_vocab(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocab(std::istream& in);

// `session_key <TAB> last_timestamp <TAB> item indices (space separated)`
void write_sessions(std::ostream& out, std::span<const Session> sessions);
std::vector<Session> read_sessions(std::istream& in);

}  // namespace gcegnn::corpus
