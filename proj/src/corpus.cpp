#include "gcegnn/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace gcegnn::corpus {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(delimiter, start);
    if (at == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, at - start));
    start = at + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::vector<int> parse_indices(std::string_view text, std::size_t line_no) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start < text.size()) {
    while (start < text.size() && text[start] == ' ') ++start;
    if (start >= text.size()) break;
    std::size_t end = text.find(' ', start);
    if (end == std::string_view::npos) end = text.size();
    auto v = parse_number<int>(text.substr(start, end - start));
    if (!v || *v < 1) throw CorpusError("line " + std::to_string(line_no) + ": bad item index");
    out.push_back(*v);
    start = end;
  }
  return out;
}

void write_indices(std::ostream& out, std::span<const int> items) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << ' ';
    out << items[i];
  }
}

// Remaps sessions through `keep(item) -> bool`, dropping short sessions, and
// rebuilds a dense vocabulary in first-seen order.
SessionCorpus rebuild(const SessionCorpus& source, std::span<const Session> sessions, std::size_t min_len,
                      const std::vector<char>& keep) {
  SessionCorpus out;
  for (const Session& s : sessions) {
    std::vector<int> kept;
    kept.reserve(s.items.size());
    for (int item : s.items)
      if (keep[static_cast<std::size_t>(item)]) kept.push_back(item);
    if (kept.size() < min_len) continue;
    Session next{s.key, {}, s.last_timestamp};
    next.items.reserve(kept.size());
    for (int item : kept) next.items.push_back(out.vocab.intern(source.vocab.raw_id(item)));
    out.sessions.push_back(std::move(next));
  }
  return out;
}

}  // namespace

// ---- Vocabulary ---------------------------------------------------------------

int Vocabulary::intern(const std::string& raw_id) {
  auto [it, inserted] = index_.try_emplace(raw_id, static_cast<int>(raw_ids_.size()) + 1);
  if (inserted) raw_ids_.push_back(raw_id);
  return it->second;
}

std::optional<int> Vocabulary::find(std::string_view raw_id) const {
  auto it = index_.find(std::string(raw_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::raw_id(int index) const {
  if (index < 1 || static_cast<std::size_t>(index) > raw_ids_.size()) {
    throw std::out_of_range("vocabulary index " + std::to_string(index) + " outside [1, " +
                            std::to_string(raw_ids_.size()) + "]");
  }
  return raw_ids_[static_cast<std::size_t>(index) - 1];
}

std::size_t SessionCorpus::click_count() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.items.size();
  return n;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw CorpusError("unknown split label '" + std::string(text) + "'");
}

// ---- ingestion ----------------------------------------------------------------

std::vector<RawEvent> read_events(std::istream& in, char delimiter) {
  std::vector<RawEvent> events;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view, delimiter);
    const bool header_candidate = first;
    first = false;
    if (fields.size() != 3) {
      throw CorpusError("line " + std::to_string(line_no) + ": expected 3 fields, found " +
                        std::to_string(fields.size()));
    }
    const auto session = trim(fields[0]);
    const auto item = trim(fields[1]);
    const auto ts = parse_number<std::int64_t>(trim(fields[2]));
    if (!ts) {
      if (header_candidate) continue;
      throw CorpusError("line " + std::to_string(line_no) + ": timestamp is not an integer");
    }
    if (session.empty() || item.empty()) {
      throw CorpusError("line " + std::to_string(line_no) + ": empty session or item id");
    }
    if (*ts < 0) throw CorpusError("line " + std::to_string(line_no) + ": negative timestamp");
    events.push_back(RawEvent{std::string(session), std::string(item), *ts});
  }
  return events;
}

SessionCorpus parse_sessions(std::span<const RawEvent> events) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<const RawEvent*>> grouped;
  for (const RawEvent& e : events) {
    if (e.session_id.empty() || e.item_id.empty() || e.timestamp < 0) {
      throw CorpusError("invalid event in session '" + e.session_id + "'");
    }
    auto [it, inserted] = slot.try_emplace(e.session_id, grouped.size());
    if (inserted) grouped.emplace_back();
    grouped[it->second].push_back(&e);
  }
  SessionCorpus corpus;
  corpus.sessions.reserve(grouped.size());
  for (auto& events_of_session : grouped) {
    std::stable_sort(events_of_session.begin(), events_of_session.end(),
                     [](const RawEvent* a, const RawEvent* b) { return a->timestamp < b->timestamp; });
    Session s;
    s.key = events_of_session.front()->session_id;
    s.last_timestamp = events_of_session.back()->timestamp;
    for (const RawEvent* e : events_of_session) s.items.push_back(corpus.vocab.intern(e->item_id));
    corpus.sessions.push_back(std::move(s));
  }
  return corpus;
}

SessionCorpus filter_corpus(const SessionCorpus& corpus, std::size_t min_item_freq, std::size_t min_session_len) {
  std::vector<std::size_t> freq(corpus.item_count() + 1, 0);
  for (const auto& s : corpus.sessions)
    for (int item : s.items) ++freq[static_cast<std::size_t>(item)];
  std::vector<char> keep(freq.size(), 0);
  for (std::size_t i = 1; i < freq.size(); ++i) keep[i] = freq[i] >= min_item_freq;
  SessionCorpus out = rebuild(corpus, corpus.sessions, min_session_len, keep);
  if (out.sessions.empty()) throw CorpusError("corpus is empty after filtering");
  return out;
}

TemporalSplit temporal_split(const SessionCorpus& corpus, std::int64_t test_window) {
  if (corpus.sessions.empty()) throw CorpusError("temporal split of an empty corpus");
  std::int64_t latest = corpus.sessions.front().last_timestamp;
  for (const auto& s : corpus.sessions) latest = std::max(latest, s.last_timestamp);
  const std::int64_t boundary = latest - test_window;

  std::vector<Session> train_sessions, test_sessions;
  for (const auto& s : corpus.sessions) (s.last_timestamp > boundary ? test_sessions : train_sessions).push_back(s);
  if (train_sessions.empty()) throw CorpusError("temporal split produced an empty train partition");

  std::vector<char> all(corpus.item_count() + 1, 1);
  TemporalSplit split;
  split.train = rebuild(corpus, train_sessions, 0, all);

  for (const auto& s : test_sessions) {
    Session t{s.key, {}, s.last_timestamp};
    for (int item : s.items)
      if (auto idx = split.train.vocab.find(corpus.vocab.raw_id(item))) t.items.push_back(*idx);
    if (t.items.size() >= 2) split.test.sessions.push_back(std::move(t));
  }
  split.test.vocab = split.train.vocab;
  if (split.test.sessions.empty()) throw CorpusError("temporal split produced an empty test partition");
  return split;
}

std::vector<Example> split_sequences(const SessionCorpus& corpus, Split split) {
  std::vector<Example> out;
  for (const auto& s : corpus.sessions) {
    for (std::size_t k = 1; k < s.items.size(); ++k) {
      out.push_back(Example{std::vector<int>(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(k)),
                            s.items[k], split});
    }
  }
  return out;
}

void assign_validation(std::vector<Example>& examples, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must be in [0, 1)");
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (examples[i].split == Split::train) train.push_back(i);
  std::size_t count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
  if (count == 0 && fraction > 0.0 && train.size() >= 2) count = 1;
  std::mt19937_64 rng(seed);
  std::shuffle(train.begin(), train.end(), rng);
  for (std::size_t i = 0; i < count; ++i) examples[train[i]].split = Split::validation;
}

CorpusStats compute_stats(const TemporalSplit& split) {
  CorpusStats stats;
  stats.clicks = split.train.click_count() + split.test.click_count();
  for (const auto& s : split.train.sessions) stats.train_examples += s.items.size() - 1;
  for (const auto& s : split.test.sessions) stats.test_examples += s.items.size() - 1;
  stats.items = split.train.item_count();
  const std::size_t sessions = split.train.sessions.size() + split.test.sessions.size();
  stats.average_length = sessions ? static_cast<double>(stats.clicks) / static_cast<double>(sessions) : 0.0;
  return stats;
}

// ---- file formats -------------------------------------------------------------

void write_examples(std::ostream& out, std::span<const Example> examples) {
  for (const auto& e : examples) {
    write_indices(out, e.prefix);
    out << '\t' << e.label << '\t' << to_string(e.split) << '\n';
  }
}

std::vector<Example> read_examples(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 3) throw CorpusError("examples line " + std::to_string(line_no) + ": expected 3 fields");
    Example e;
    e.prefix = parse_indices(fields[0], line_no);
    const auto label = parse_number<int>(fields[1]);
    if (e.prefix.empty() || !label || *label < 1) {
      throw CorpusError("examples line " + std::to_string(line_no) + ": empty prefix or bad label");
    }
    e.label = *label;
    e.split = split_from_string(trim(fields[2]));
    out.push_back(std::move(e));
  }
  return out;
}

void write_vocab(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.raw_ids()[i] << '\t' << (i + 1) << '\n';
}

Vocabulary read_vocab(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    const auto index = fields.size() == 2 ? parse_number<int>(trim(fields[1])) : std::nullopt;
    if (!index) throw CorpusError("vocabulary line " + std::to_string(line_no) + ": expected 'raw_id<TAB>index'");
    if (vocab.intern(std::string(fields[0])) != *index) {
      throw CorpusError("vocabulary line " + std::to_string(line_no) + ": indices must be dense and in order");
    }
  }
  return vocab;
}

void write_sessions(std::ostream& out, std::span<const Session> sessions) {
  for (const auto& s : sessions) {
    out << s.key << '\t' << s.last_timestamp << '\t';
    write_indices(out, s.items);
    out << '\n';
  }
}

std::vector<Session> read_sessions(std::istream& in) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    const auto ts = fields.size() == 3 ? parse_number<std::int64_t>(fields[1]) : std::nullopt;
    if (!ts) throw CorpusError("sessions line " + std::to_string(line_no) + ": malformed record");
    out.push_back(Session{std::string(fields[0]), parse_indices(fields[2], line_no), *ts});
  }
  return out;
}

}  // namespace gcegnn::corpus
