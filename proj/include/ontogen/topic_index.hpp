#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ontogen/corpus.hpp"
#include "ontogen/digest.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/text.hpp"

namespace ontogen {

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

enum class TopicSource : std::uint8_t { external_ner, allowlist, manual };

inline std::string_view to_string(TopicSource s) noexcept {
  switch (s) {
    case TopicSource::external_ner:
      return "external_ner";
    case TopicSource::allowlist:
      return "allowlist";
    case TopicSource::manual:
      return "manual";
  }
  return "manual";
}

inline TopicSource parse_topic_source(std::string_view s) {
  if (s == "external_ner") return TopicSource::external_ner;
  if (s == "allowlist") return TopicSource::allowlist;
  if (s == "manual") return TopicSource::manual;
  throw ParseError("unknown topic source '" + std::string(s) + "'");
}

struct TopicEntry {
  std::string topic_id;
  std::string label;  // normalized
  TopicSource source = TopicSource::manual;

  bool operator==(const TopicEntry&) const = default;
};

/// Candidate topics. Labels are normalized on construction; ids and labels
/// must be unique and non-empty.
class TopicLexicon {
 public:
  TopicLexicon() = default;

  explicit TopicLexicon(std::vector<TopicEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& e = entries_[i];
      e.label = normalize_text(e.label);
      if (e.topic_id.empty()) throw ConfigError("lexicon entry with empty topic_id");
      if (e.label.empty()) throw ConfigError("lexicon entry '" + e.topic_id + "' has empty label");
      if (!by_id_.emplace(e.topic_id, i).second)
        throw ConfigError("duplicate topic_id '" + e.topic_id + "'");
      if (!by_label_.emplace(e.label, i).second)
        throw ConfigError("duplicate label '" + e.label + "'");
    }
  }

  std::span<const TopicEntry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const TopicEntry& operator[](std::size_t i) const { return entries_.at(i); }

  std::optional<std::size_t> find_id(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? std::nullopt : std::optional(it->second);
  }

  /// Lookup by label; the argument is normalized first.
  std::optional<std::size_t> find_label(std::string_view label) const {
    auto it = by_label_.find(normalize_text(label));
    return it == by_label_.end() ? std::nullopt : std::optional(it->second);
  }

  const std::string& label_of(std::string_view id) const {
    auto i = find_id(id);
    if (!i) throw LookupError("unknown topic_id '" + std::string(id) + "'");
    return entries_[*i].label;
  }

  const std::string& id_of_label(std::string_view label) const {
    auto i = find_label(label);
    if (!i) throw LookupError("unknown topic label '" + std::string(label) + "'");
    return entries_[*i].topic_id;
  }

  /// Order-independent SHA-256 over (id, label, source).
  std::string digest() const {
    std::vector<const TopicEntry*> sorted;
    for (const auto& e : entries_) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->topic_id < b->topic_id; });
    Sha256 h;
    for (const auto* e : sorted)
      h.update(e->topic_id).update("\t").update(e->label).update("\t").update(to_string(e->source)).update("\n");
    return h.hex();
  }

 private:
  std::vector<TopicEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_label_;
};

/// Tab-separated topic_id, label, source. Blank lines and '#' comments are skipped.
inline TopicLexicon parse_lexicon(std::istream& in) {
  std::vector<TopicEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = strip_cr(line);
    if (trim(view).empty() || view.front() == '#') continue;
    const auto f = split_tabs(view);
    if (f.size() != 3) throw ParseError("lexicon line needs 3 tab-separated fields", lineno);
    try {
      entries.push_back({std::string(trim(f[0])), std::string(f[1]), parse_topic_source(trim(f[2]))});
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return TopicLexicon(std::move(entries));
}

inline TopicLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  return parse_lexicon(in);
}

inline void write_lexicon(std::ostream& out, const TopicLexicon& lex) {
  for (const auto& e : lex.entries())
    out << e.topic_id << '\t' << e.label << '\t' << to_string(e.source) << '\n';
}

// ---------------------------------------------------------------------------
// Matcher
// ---------------------------------------------------------------------------

struct YearWindow {
  int start_year = 0;
  int end_year = -1;

  /// The `years` most recent years ending at `reference_year`, inclusive.
  static YearWindow ending_at(int reference_year, int years) {
    if (years <= 0) throw ConfigError("window_years must be positive");
    return {reference_year - years + 1, reference_year};
  }

  bool valid() const noexcept { return start_year <= end_year; }
  std::size_t size() const noexcept {
    return valid() ? static_cast<std::size_t>(end_year - start_year + 1) : 0;
  }
  bool contains(int year) const noexcept { return year >= start_year && year <= end_year; }
  std::size_t offset(int year) const noexcept { return static_cast<std::size_t>(year - start_year); }

  bool operator==(const YearWindow&) const = default;
};

struct Match {
  std::size_t topic;        // lexicon index
  std::size_t token_begin;  // first token of the match
  std::size_t token_end;    // one past the last token
  bool operator==(const Match&) const = default;
};

/// Multi-pattern matcher over whole tokens: a trie keyed by token ids,
/// scanned left to right taking the longest label at each position and
/// resuming after it. Immutable and cheap to copy (shared state).
class Matcher {
 public:
  std::vector<Match> find(std::string_view normalized) const {
    const auto tokens = split_tokens(normalized);
    std::vector<std::int64_t> ids(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto it = impl_->vocab.find(tokens[i]);
      ids[i] = it == impl_->vocab.end() ? -1 : static_cast<std::int64_t>(it->second);
    }
    std::vector<Match> out;
    std::size_t pos = 0;
    while (pos < ids.size()) {
      std::uint32_t node = 0;
      std::optional<Match> best;
      for (std::size_t j = pos; j < ids.size() && ids[j] >= 0; ++j) {
        const auto& children = impl_->nodes[node].children;
        auto next = children.find(static_cast<std::uint32_t>(ids[j]));
        if (next == children.end()) break;
        node = next->second;
        if (impl_->nodes[node].terminal >= 0)
          best = Match{static_cast<std::size_t>(impl_->nodes[node].terminal), pos, j + 1};
      }
      if (best) {
        pos = best->token_end;
        out.push_back(*best);
      } else {
        ++pos;
      }
    }
    return out;
  }

  const std::vector<std::string>& topic_ids() const noexcept { return impl_->topic_ids; }
  const std::string& lexicon_digest() const noexcept { return impl_->lexicon_digest; }

 private:
  friend Matcher build_matcher(const TopicLexicon& lexicon);

  struct Node {
    std::unordered_map<std::uint32_t, std::uint32_t> children;
    std::int64_t terminal = -1;
  };
  struct Impl {
    std::deque<std::string> token_storage;
    std::unordered_map<std::string_view, std::uint32_t> vocab;
    std::vector<Node> nodes;
    std::vector<std::string> topic_ids;
    std::string lexicon_digest;
  };
  std::shared_ptr<const Impl> impl_;
};

inline Matcher build_matcher(const TopicLexicon& lexicon) {
  if (lexicon.empty()) throw ConfigError("cannot build a matcher from an empty lexicon");
  auto impl = std::make_shared<Matcher::Impl>();
  impl->nodes.emplace_back();
  for (std::size_t t = 0; t < lexicon.size(); ++t) {
    const auto& entry = lexicon[t];
    impl->topic_ids.push_back(entry.topic_id);
    std::uint32_t node = 0;
    for (auto tok : split_tokens(entry.label)) {
      auto it = impl->vocab.find(tok);
      if (it == impl->vocab.end()) {
        const auto& stored = impl->token_storage.emplace_back(tok);
        it = impl->vocab.emplace(stored, static_cast<std::uint32_t>(impl->vocab.size())).first;
      }
      auto [child, inserted] =
          impl->nodes[node].children.emplace(it->second, static_cast<std::uint32_t>(impl->nodes.size()));
      if (inserted) impl->nodes.emplace_back();
      node = child->second;
    }
    impl->nodes[node].terminal = static_cast<std::int64_t>(t);
  }
  impl->lexicon_digest = lexicon.digest();
  Matcher m;
  m.impl_ = std::move(impl);
  return m;
}

// ---------------------------------------------------------------------------
// Occurrence statistics
// ---------------------------------------------------------------------------

class OccurrenceStats;
struct StatsFile;
inline void write_stats(std::ostream& out, const OccurrenceStats& s, std::string_view lexicon_digest);
inline StatsFile read_stats(std::istream& in);

/// Per-topic, per-year mention counts and document frequencies, plus sparse
/// document co-occurrence counts. Topics are held in lexicographic topic_id
/// order, so a pair key (i, j) with i < j has the smaller id first.
class OccurrenceStats {
 public:
  using Count = std::uint64_t;

  OccurrenceStats() = default;

  OccurrenceStats(std::vector<std::string> topic_ids, YearWindow window) : window_(window) {
    if (!window.valid()) throw ConfigError("invalid year window");
    std::sort(topic_ids.begin(), topic_ids.end());
    if (std::adjacent_find(topic_ids.begin(), topic_ids.end()) != topic_ids.end())
      throw ConfigError("duplicate topic ids in stats");
    ids_ = std::move(topic_ids);
    for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
    mentions_.assign(ids_.size() * years(), 0);
    doc_freq_.assign(ids_.size() * years(), 0);
    docs_.assign(years(), 0);
  }

  const YearWindow& window() const noexcept { return window_; }
  std::size_t years() const noexcept { return window_.size(); }
  std::size_t num_topics() const noexcept { return ids_.size(); }
  const std::vector<std::string>& topic_ids() const noexcept { return ids_; }
  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

  std::size_t index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw LookupError("topic '" + std::string(id) + "' not in stats");
    return it->second;
  }

  Count docs_in_year(std::size_t y) const { return docs_.at(y); }
  Count total_docs() const { return sum(docs_); }

  Count mentions(std::size_t t, std::size_t y) const { return mentions_.at(t * years() + y); }
  Count doc_freq(std::size_t t, std::size_t y) const { return doc_freq_.at(t * years() + y); }
  Count cooccurrence(std::size_t a, std::size_t b, std::size_t y) const {
    if (a == b) return doc_freq(a, y);
    auto it = cooc_.find(key(a, b));
    return it == cooc_.end() ? 0 : it->second.at(y);
  }

  Count total_mentions(std::size_t t) const { return sum_row(mentions_, t); }
  Count total_doc_freq(std::size_t t) const { return sum_row(doc_freq_, t); }
  Count total_cooccurrence(std::size_t a, std::size_t b) const {
    if (a == b) return total_doc_freq(a);
    auto it = cooc_.find(key(a, b));
    return it == cooc_.end() ? 0 : sum(it->second);
  }

  // id-based convenience lookups
  Count total_doc_freq(std::string_view id) const { return total_doc_freq(index_of(id)); }
  Count total_mentions(std::string_view id) const { return total_mentions(index_of(id)); }
  Count total_cooccurrence(std::string_view a, std::string_view b) const {
    return total_cooccurrence(index_of(a), index_of(b));
  }

  /// Records one in-window document and the lexicon-topic stats indices it mentions.
  void add_document(std::size_t year_offset, std::span<const std::size_t> matched_topics) {
    ++docs_.at(year_offset);
    std::vector<std::size_t> distinct(matched_topics.begin(), matched_topics.end());
    for (auto t : distinct) ++mentions_.at(t * years() + year_offset);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (auto t : distinct) ++doc_freq_.at(t * years() + year_offset);
    for (std::size_t i = 0; i < distinct.size(); ++i)
      for (std::size_t j = i + 1; j < distinct.size(); ++j) {
        auto& row = cooc_[key(distinct[i], distinct[j])];
        if (row.empty()) row.assign(years(), 0);
        ++row[year_offset];
      }
  }

  /// Field-wise addition; both sides must share topics and window.
  OccurrenceStats& merge(const OccurrenceStats& other) {
    if (other.ids_ != ids_ || other.window_ != window_)
      throw ConfigError("cannot merge stats over different topics or windows");
    for (std::size_t i = 0; i < docs_.size(); ++i) docs_[i] += other.docs_[i];
    for (std::size_t i = 0; i < mentions_.size(); ++i) {
      mentions_[i] += other.mentions_[i];
      doc_freq_[i] += other.doc_freq_[i];
    }
    for (const auto& [k, row] : other.cooc_) {
      auto& mine = cooc_[k];
      if (mine.empty()) mine.assign(years(), 0);
      for (std::size_t y = 0; y < row.size(); ++y) mine[y] += row[y];
    }
    return *this;
  }

  /// Pairs with any non-zero count, sorted by (a, b) index.
  std::vector<std::pair<std::size_t, std::size_t>> nonzero_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(cooc_.size());
    for (const auto& [k, row] : cooc_) out.emplace_back(k >> 32, k & 0xffffffffULL);
    std::sort(out.begin(), out.end());
    return out;
  }

  bool operator==(const OccurrenceStats& o) const {
    return window_ == o.window_ && ids_ == o.ids_ && docs_ == o.docs_ && mentions_ == o.mentions_ &&
           doc_freq_ == o.doc_freq_ && cooc_ == o.cooc_;
  }

 private:
  friend void write_stats(std::ostream&, const OccurrenceStats&, std::string_view);
  friend StatsFile read_stats(std::istream&);

  static std::uint64_t key(std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }
  static Count sum(const std::vector<Count>& v) {
    Count s = 0;
    for (auto x : v) s += x;
    return s;
  }
  Count sum_row(const std::vector<Count>& v, std::size_t t) const {
    if (t >= ids_.size()) throw LookupError("topic index out of range");
    Count s = 0;
    for (std::size_t y = 0; y < years(); ++y) s += v[t * years() + y];
    return s;
  }

  YearWindow window_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Count> docs_;
  std::vector<Count> mentions_;
  std::vector<Count> doc_freq_;
  std::unordered_map<std::uint64_t, std::vector<Count>> cooc_;
};

/// Incremental counter; one per worker, merged afterwards.
class OccurrenceCounter {
 public:
  OccurrenceCounter(Matcher matcher, YearWindow window)
      : matcher_(std::move(matcher)), stats_(matcher_.topic_ids(), window) {
    if (!window.valid()) throw ConfigError("invalid year window");
    for (const auto& id : matcher_.topic_ids()) lex_to_stats_.push_back(stats_.index_of(id));
  }

  void add(const PaperRecord& rec) {
    const auto& w = stats_.window();
    if (!w.contains(rec.year)) return;
    std::vector<std::size_t> hits;
    for (const auto* field : {&rec.title, &rec.abstract})
      for (const auto& m : matcher_.find(normalize_text(*field))) hits.push_back(lex_to_stats_[m.topic]);
    stats_.add_document(w.offset(rec.year), hits);
  }

  OccurrenceStats finish() && { return std::move(stats_); }
  const OccurrenceStats& stats() const noexcept { return stats_; }

 private:
  Matcher matcher_;
  OccurrenceStats stats_;
  std::vector<std::size_t> lex_to_stats_;
};

/// Counts title+abstract matches of in-window documents.
inline OccurrenceStats count_occurrences(std::span<const PaperRecord> corpus, const Matcher& matcher,
                                         YearWindow window) {
  OccurrenceCounter counter(matcher, window);
  for (const auto& rec : corpus) counter.add(rec);
  return std::move(counter).finish();
}

/// Same result as count_occurrences, computed over contiguous shards on
/// worker threads and merged.
inline OccurrenceStats count_occurrences_parallel(std::span<const PaperRecord> corpus,
                                                  const Matcher& matcher, YearWindow window,
                                                  std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, corpus.size()));
  if (workers == 1) return count_occurrences(corpus, matcher, window);
  std::vector<std::optional<OccurrenceStats>> parts(workers);
  {
    std::vector<std::jthread> threads;
    const std::size_t chunk = (corpus.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = std::min(corpus.size(), w * chunk);
      const std::size_t e = std::min(corpus.size(), b + chunk);
      threads.emplace_back([&, w, b, e] { parts[w] = count_occurrences(corpus.subspan(b, e - b), matcher, window); });
    }
  }
  OccurrenceStats out = std::move(*parts[0]);
  for (std::size_t w = 1; w < workers; ++w) out.merge(*parts[w]);
  return out;
}

// ---------------------------------------------------------------------------
// Candidate filtering and root-seeded selection
// ---------------------------------------------------------------------------

struct CandidateFilterConfig {
  std::set<std::string> allowlist;
  std::set<std::string> denylist;
  double generic_df_ratio = 0.2;
  std::uint64_t min_doc_freq = 1;

  void validate() const {
    if (!(generic_df_ratio > 0.0 && generic_df_ratio <= 1.0))
      throw ConfigError("generic_df_ratio must be in (0, 1]");
    for (const auto& a : allowlist)
      for (const auto& d : denylist)
        if (normalize_text(a) == normalize_text(d))
          throw ConfigError("label '" + a + "' is in both allowlist and denylist");
  }
};

inline TopicLexicon filter_candidates(const OccurrenceStats& stats, const TopicLexicon& lexicon,
                                      const CandidateFilterConfig& config) {
  config.validate();
  std::set<std::string> allow, deny;
  for (const auto& a : config.allowlist) allow.insert(normalize_text(a));
  for (const auto& d : config.denylist) deny.insert(normalize_text(d));
  const auto total = static_cast<double>(stats.total_docs());

  std::vector<TopicEntry> kept;
  for (const auto& e : lexicon.entries()) {
    if (deny.contains(e.label)) continue;
    if (allow.contains(e.label)) {
      kept.push_back(e);
      continue;
    }
    const auto df = stats.total_doc_freq(e.topic_id);
    if (df < config.min_doc_freq) continue;
    if (total > 0 && static_cast<double>(df) / total > config.generic_df_ratio) continue;
    kept.push_back(e);
  }
  return TopicLexicon(std::move(kept));
}

/// Up to k topics of `lexicon` other than root, by descending aggregate
/// co-occurrence with root, then descending doc freq, then label.
inline std::vector<std::string> select_related_topics(const OccurrenceStats& stats,
                                                      const TopicLexicon& lexicon,
                                                      std::string_view root, std::size_t k) {
  const auto root_idx = stats.index_of(root);
  struct Cand {
    std::uint64_t cooc;
    std::uint64_t df;
    const TopicEntry* entry;
  };
  std::vector<Cand> cands;
  for (const auto& e : lexicon.entries()) {
    if (e.topic_id == root) continue;
    const auto idx = stats.index_of(e.topic_id);
    cands.push_back({stats.total_cooccurrence(root_idx, idx), stats.total_doc_freq(idx), &e});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.cooc != b.cooc) return a.cooc > b.cooc;
    if (a.df != b.df) return a.df > b.df;
    return a.entry->label < b.entry->label;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cands.size() && i < k; ++i) out.push_back(cands[i].entry->topic_id);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------
//
// Binary cache layout (all integers little-endian):
//   magic "OGSTATS\0" | u32 format_version | i32 start_year | i32 end_year
//   | str lexicon_digest | u64 n_topics | n_topics × str topic_id
//   | years × u64 docs | n_topics × years × u64 mentions
//   | n_topics × years × u64 doc_freq | u64 n_pairs
//   | n_pairs × (u32 a, u32 b, years × u64 cooc)
// where str = u32 byte length followed by UTF-8 bytes.

inline constexpr std::uint32_t kStatsFormatVersion = 1;
inline constexpr char kStatsMagic[8] = {'O', 'G', 'S', 'T', 'A', 'T', 'S', '\0'};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  using U = std::make_unsigned_t<T>;
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("truncated stats file");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void put_str(std::ostream& out, std::string_view s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > (1u << 24)) throw ParseError("implausible string length in stats file");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw ParseError("truncated stats file");
  return s;
}

}  // namespace detail

struct StatsFile {
  OccurrenceStats stats;
  std::string lexicon_digest;
};

inline void write_stats(std::ostream& out, const OccurrenceStats& s, std::string_view lexicon_digest) {
  using namespace detail;
  out.write(kStatsMagic, sizeof kStatsMagic);
  put_le<std::uint32_t>(out, kStatsFormatVersion);
  put_le<std::int32_t>(out, s.window_.start_year);
  put_le<std::int32_t>(out, s.window_.end_year);
  put_str(out, lexicon_digest);
  put_le<std::uint64_t>(out, s.ids_.size());
  for (const auto& id : s.ids_) put_str(out, id);
  for (auto d : s.docs_) put_le<std::uint64_t>(out, d);
  for (auto m : s.mentions_) put_le<std::uint64_t>(out, m);
  for (auto d : s.doc_freq_) put_le<std::uint64_t>(out, d);
  const auto pairs = s.nonzero_pairs();
  put_le<std::uint64_t>(out, pairs.size());
  for (auto [a, b] : pairs) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b));
    for (auto c : s.cooc_.at(OccurrenceStats::key(a, b))) put_le<std::uint64_t>(out, c);
  }
}

inline StatsFile read_stats(std::istream& in) {
  using namespace detail;
  char magic[sizeof kStatsMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kStatsMagic, sizeof magic) != 0)
    throw ParseError("not an occurrence stats file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kStatsFormatVersion)
    throw ParseError("unsupported stats format version " + std::to_string(version));
  YearWindow w{get_le<std::int32_t>(in), get_le<std::int32_t>(in)};
  StatsFile f;
  f.lexicon_digest = get_str(in);
  const auto n = get_le<std::uint64_t>(in);
  std::vector<std::string> ids;
  for (std::uint64_t i = 0; i < n; ++i) ids.push_back(get_str(in));
  if (!std::is_sorted(ids.begin(), ids.end())) throw ParseError("stats topic ids not sorted");
  OccurrenceStats s(ids, w);
  for (auto& d : s.docs_) d = get_le<std::uint64_t>(in);
  for (auto& m : s.mentions_) m = get_le<std::uint64_t>(in);
  for (auto& d : s.doc_freq_) d = get_le<std::uint64_t>(in);
  const auto pairs = get_le<std::uint64_t>(in);
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const auto a = get_le<std::uint32_t>(in);
    const auto b = get_le<std::uint32_t>(in);
    if (a >= b || b >= n) throw ParseError("bad pair index in stats file");
    auto& row = s.cooc_[OccurrenceStats::key(a, b)];
    row.resize(s.years());
    for (auto& c : row) c = get_le<std::uint64_t>(in);
  }
  f.stats = std::move(s);
  return f;
}

inline void save_stats(const std::filesystem::path& path, const OccurrenceStats& s,
                       std::string_view lexicon_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_stats(out, s, lexicon_digest);
  if (!out) throw IoError("write failed for " + path.string());
}

inline StatsFile load_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_stats(in);
}

/// Debug export: topic_id, year, mentions, doc_freq.
inline void write_occurrence_table(std::ostream& out, const OccurrenceStats& s) {
  out << "#topic_id\tyear\tmentions\tdoc_freq\n";
  for (std::size_t t = 0; t < s.num_topics(); ++t)
    for (std::size_t y = 0; y < s.years(); ++y)
      out << s.topic_ids()[t] << '\t' << s.window().start_year + static_cast<int>(y) << '\t'
          << s.mentions(t, y) << '\t' << s.doc_freq(t, y) << '\n';
}

/// Debug export: topic_a, topic_b, year, coocc (non-zero rows only).
inline void write_pair_table(std::ostream& out, const OccurrenceStats& s) {
  out << "#topic_a\ttopic_b\tyear\tcoocc\n";
  for (auto [a, b] : s.nonzero_pairs())
    for (std::size_t y = 0; y < s.years(); ++y)
      if (auto c = s.cooccurrence(a, b, y))
        out << s.topic_ids()[a] << '\t' << s.topic_ids()[b] << '\t'
            << s.window().start_year + static_cast<int>(y) << '\t' << c << '\n';
}

}  // namespace ontogen
