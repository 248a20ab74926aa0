#pragma once

#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ontogen/errors.hpp"
#include "ontogen/text.hpp"

namespace ontogen {

struct PaperRecord {
  std::string paper_id;
  std::string title;
  std::string abstract;
  int year = 0;
  std::optional<std::string> language;

  bool operator==(const PaperRecord&) const = default;
};

struct CorpusFilterReport {
  std::size_t total_read = 0;
  std::size_t kept = 0;
  std::size_t dropped_missing_fields = 0;
  std::size_t dropped_language = 0;
  std::size_t dropped_year_range = 0;

  bool reconciles() const noexcept {
    return kept + dropped_missing_fields + dropped_language + dropped_year_range == total_read;
  }

  CorpusFilterReport& operator+=(const CorpusFilterReport& o) noexcept {
    total_read += o.total_read;
    kept += o.kept;
    dropped_missing_fields += o.dropped_missing_fields;
    dropped_language += o.dropped_language;
    dropped_year_range += o.dropped_year_range;
    return *this;
  }

  bool operator==(const CorpusFilterReport&) const = default;
};

inline void to_json(nlohmann::json& j, const CorpusFilterReport& r) {
  j = {{"total_read", r.total_read},
       {"kept", r.kept},
       {"dropped_missing_fields", r.dropped_missing_fields},
       {"dropped_language", r.dropped_language},
       {"dropped_year_range", r.dropped_year_range}};
}

/// Decides whether untagged text is English.
class LanguageDetector {
 public:
  virtual ~LanguageDetector() = default;
  virtual bool is_english(std::string_view text) const = 0;
};

/// Character-trigram profile comparison against English and five other
/// European languages common in scholarly metadata. Text too short to judge
/// is accepted.
class TrigramLanguageDetector final : public LanguageDetector {
 public:
  static constexpr std::size_t kMinTrigrams = 30;
  static constexpr double kMinEnglishScore = 0.08;

  TrigramLanguageDetector() {
    english_ = make_profile({U" th", U"the", U"he ", U" of", U"of ", U" an", U"and", U"nd ",
                             U" in", U"ion", U"ing", U"ng ", U"tio", U" to", U"to ", U"ed ",
                             U"is ", U" co", U"in ", U"es ", U"ent", U" re", U"re ", U"on ",
                             U" a ", U"at ", U"ati", U"er ", U" be", U"al ", U" is", U"for",
                             U" fo", U"or ", U"ate", U"ter", U"ly ", U"tha", U"hat", U"st ",
                             U"ons", U"ver", U"all", U"men", U"nt ", U"res", U"ts ", U" wh",
                             U"ce ", U"as ", U" on", U"ect", U"rs ", U"ich", U"wit", U"ith",
                             U"th ", U" wi", U" pr", U"pro"});
    others_.push_back(make_profile(
        {U" de", U"de ", U"es ", U" le", U"ent", U" la", U"le ", U"la ", U"ion", U" et",
         U"et ", U"les", U" co", U"tio", U"on ", U" pr", U" re", U"des", U"nt ", U"que",
         U"ue ", U" qu", U" un", U"une", U" po", U"ne ", U"our", U" l ", U"men", U"eme",
         U"ont", U" pa", U"par", U" d ", U"re ", U" es", U"ons", U"ati"}));
    others_.push_back(make_profile(
        {U"en ", U"er ", U" de", U"der", U"ie ", U"ich", U"ein", U" di", U"die", U"sch",
         U"che", U"nd ", U" un", U"und", U"den", U"ch ", U"ten", U"in ", U"gen", U" ei",
         U"ung", U"ng ", U"ine", U" ge", U"te ", U"cht", U"eit", U" da", U"es ", U" zu",
         U"zu ", U"hen", U"ste", U" mi", U"mit", U"it ", U" we", U"ver", U" vo"}));
    others_.push_back(make_profile(
        {U" de", U"de ", U"os ", U"la ", U" la", U"es ", U" co", U"as ", U"ión", U"ent",
         U"el ", U" el", U" en", U"en ", U"ado", U"ón ", U"nte", U"aci", U"cio", U" pa",
         U"par", U"ara", U"ra ", U" qu", U"que", U"ue ", U" lo", U"los", U" un", U"una",
         U" se", U"con", U"est", U"do ", U"ar ", U" es", U"ien", U"ici", U"al ", U" pr"}));
    others_.push_back(make_profile(
        {U" di", U"di ", U"la ", U"re ", U"to ", U" de", U"ell", U"zio", U"ion", U"one",
         U"ne ", U" la", U"del", U"ent", U" co", U" pe", U"per", U"er ", U"lla", U"gli",
         U" in", U" un", U"no ", U"ta ", U"ti ", U"ato", U"azi", U"che", U"he ", U" ch",
         U"con", U" e ", U"nte", U"li ", U" il", U"il ", U"ere", U" pr"}));
    others_.push_back(make_profile(
        {U" de", U"de ", U"os ", U"ão ", U"ção", U"do ", U"da ", U" co", U"es ", U"as ",
         U"ent", U" a ", U" pa", U"ra ", U"par", U"com", U"om ", U" qu", U"que", U"ue ",
         U"nte", U" do", U" da", U" um", U"um ", U"uma", U" se", U" pr", U"ade", U"dos",
         U"ado", U"ões", U" es", U"sta", U"men", U" no", U"ar ", U" po"}));
  }

  bool is_english(std::string_view text) const override {
    const auto trigrams = word_trigrams(normalize_text(text));
    if (trigrams.size() < kMinTrigrams) return true;
    const double en = score(trigrams, english_);
    if (en < kMinEnglishScore) return false;
    return std::all_of(others_.begin(), others_.end(),
                       [&](const Profile& p) { return en >= score(trigrams, p); });
  }

 private:
  using Profile = std::unordered_set<std::u32string>;

  static Profile make_profile(std::initializer_list<const char32_t*> grams) {
    Profile p;
    for (const auto* g : grams) p.emplace(g);
    return p;
  }

  static std::vector<std::u32string> word_trigrams(const std::string& normalized) {
    std::vector<std::u32string> out;
    for (auto token : split_tokens(normalized)) {
      icu::UnicodeString u = icu::UnicodeString::fromUTF8(
          icu::StringPiece(token.data(), static_cast<int32_t>(token.size())));
      std::u32string padded = U" ";
      for (int32_t i = 0; i < u.length();) {
        const UChar32 c = u.char32At(i);
        padded.push_back(static_cast<char32_t>(c));
        i += U16_LENGTH(c);
      }
      padded.push_back(U' ');
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back(padded.substr(i, 3));
    }
    return out;
  }

  static double score(const std::vector<std::u32string>& grams, const Profile& p) {
    const auto hits = std::count_if(grams.begin(), grams.end(),
                                    [&](const std::u32string& g) { return p.contains(g); });
    return static_cast<double>(hits) / static_cast<double>(grams.size());
  }

  Profile english_;
  std::vector<Profile> others_;
};

inline int current_calendar_year() {
  const auto now = std::chrono::system_clock::now();
  const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(now)};
  return static_cast<int>(ymd.year());
}

struct CorpusConfig {
  bool english_only = true;
  int window_years = 10;
  /// Anchors both the year-validity bound and the indexing window; unset means the clock year.
  std::optional<int> reference_year;
  /// Null selects the built-in trigram detector.
  std::shared_ptr<const LanguageDetector> detector;

  int effective_reference_year() const {
    return reference_year ? *reference_year : current_calendar_year();
  }
};

inline constexpr int kMinValidYear = 1900;

/// Single-pass reader over a line-delimited JSON corpus. Malformed lines are
/// counted as dropped_missing_fields and never abort the stream.
class CorpusReader {
 public:
  CorpusReader(const std::filesystem::path& path, CorpusConfig config)
      : in_(path), config_(std::move(config)), max_year_(config_.effective_reference_year() + 1) {
    if (!in_) throw IoError("cannot open corpus file " + path.string());
    if (!config_.detector) config_.detector = std::make_shared<TrigramLanguageDetector>();
  }

  /// Next record that passes every filter, or nullopt at end of input.
  std::optional<PaperRecord> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++report_.total_read;
      switch (classify(line)) {
        case Verdict::kept:
          ++report_.kept;
          return std::move(pending_);
        case Verdict::missing_fields:
          ++report_.dropped_missing_fields;
          break;
        case Verdict::language:
          ++report_.dropped_language;
          break;
        case Verdict::year_range:
          ++report_.dropped_year_range;
          break;
      }
    }
    if (in_.bad()) throw IoError("read error while scanning corpus");
    return std::nullopt;
  }

  const CorpusFilterReport& report() const noexcept { return report_; }

 private:
  enum class Verdict { kept, missing_fields, language, year_range };

  Verdict classify(const std::string& line) {
    auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object()) return Verdict::missing_fields;
    const auto str_field = [&](const char* key) -> const std::string* {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) return nullptr;
      return it->get_ptr<const std::string*>();
    };
    const auto* id = str_field("paper_id");
    const auto* title = str_field("title");
    const auto* abstract = str_field("abstract");
    auto year_it = j.find("year");
    if (!id || !title || !abstract || year_it == j.end() || !year_it->is_number_integer())
      return Verdict::missing_fields;
    if (trim(*id).empty() || trim(*title).empty() || trim(*abstract).empty())
      return Verdict::missing_fields;

    PaperRecord rec{*id, *title, *abstract, year_it->get<int>(), std::nullopt};
    if (auto lang = j.find("language"); lang != j.end() && !lang->is_null()) {
      if (!lang->is_string()) return Verdict::missing_fields;
      if (!trim(lang->get_ref<const std::string&>()).empty())
        rec.language = lang->get<std::string>();
    }

    if (rec.year < kMinValidYear || rec.year > max_year_) return Verdict::year_range;
    if (config_.english_only && !is_english(rec)) return Verdict::language;
    pending_ = std::move(rec);
    return Verdict::kept;
  }

  bool is_english(const PaperRecord& rec) const {
    if (rec.language) {
      std::string tag = normalize_text(*rec.language);
      if (auto sp = tag.find(' '); sp != std::string::npos) tag.resize(sp);
      return tag == "en" || tag == "eng" || tag == "english";
    }
    return config_.detector->is_english(rec.title + ". " + rec.abstract);
  }

  std::ifstream in_;
  CorpusConfig config_;
  int max_year_;
  CorpusFilterReport report_;
  PaperRecord pending_;
};

struct LoadedCorpus {
  std::vector<PaperRecord> records;
  CorpusFilterReport report;
};

/// Materializes the whole filtered stream; record order follows the input.
inline LoadedCorpus load_corpus(const std::filesystem::path& path, const CorpusConfig& config) {
  CorpusReader reader(path, config);
  LoadedCorpus out;
  while (auto rec = reader.next()) out.records.push_back(std::move(*rec));
  out.report = reader.report();
  return out;
}

}  // namespace ontogen
