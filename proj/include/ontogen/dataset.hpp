#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ontogen/errors.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/rng.hpp"
#include "ontogen/text.hpp"

namespace ontogen {

struct LabeledTriple {
  std::string topic_a;
  std::string topic_b;
  RelationClass relation = RelationClass::other;
  bool operator==(const LabeledTriple&) const = default;
};

using OrderedPair = std::pair<std::string, std::string>;

/// Normalized ordered pair; identity for pair comparisons across files.
inline OrderedPair pair_key(std::string_view a, std::string_view b) {
  return {normalize_text(a), normalize_text(b)};
}

struct TripleFile {
  std::vector<LabeledTriple> triples;
  std::vector<std::string> warnings;
};

/// Tab-separated topic_a, topic_b, relation. Duplicated pairs are kept and
/// reported as warnings.
inline TripleFile parse_triples(std::istream& in) {
  TripleFile out;
  std::map<OrderedPair, std::size_t> first_seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = strip_cr(line);
    if (trim(view).empty() || view.front() == '#') continue;
    const auto f = split_tabs(view);
    if (f.size() != 3) throw ParseError("triple line needs 3 tab-separated fields", lineno);
    const auto rel = try_parse_relation(trim(f[2]));
    if (!rel) throw ParseError("unknown relation label '" + std::string(trim(f[2])) + "'", lineno);
    LabeledTriple t{std::string(trim(f[0])), std::string(trim(f[1])), *rel};
    auto key = pair_key(t.topic_a, t.topic_b);
    if (key.first.empty() || key.second.empty()) throw ParseError("empty topic label", lineno);
    if (key.first == key.second) throw ParseError("triple relates a topic to itself", lineno);
    if (auto [it, fresh] = first_seen.emplace(key, lineno); !fresh)
      out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate pair (" + t.topic_a + ", " +
                             t.topic_b + ") first seen on line " + std::to_string(it->second));
    out.triples.push_back(std::move(t));
  }
  if (out.triples.empty()) out.warnings.push_back("no triples found");
  return out;
}

inline TripleFile load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file " + path.string());
  return parse_triples(in);
}

inline void write_triples(std::ostream& out, std::span<const LabeledTriple> triples) {
  for (const auto& t : triples) out << t.topic_a << '\t' << t.topic_b << '\t' << to_string(t.relation) << '\n';
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class SplitName : std::uint8_t { train = 0, validation = 1, test = 2 };

inline std::string_view to_string(SplitName s) noexcept {
  switch (s) {
    case SplitName::train:
      return "train";
    case SplitName::validation:
      return "validation";
    case SplitName::test:
      return "test";
  }
  return "train";
}

struct DatasetSplit {
  std::vector<LabeledTriple> train;
  std::vector<LabeledTriple> validation;
  std::vector<LabeledTriple> test;
  std::uint64_t seed = 0;

  std::vector<LabeledTriple>& part(SplitName s) {
    return s == SplitName::train ? train : s == SplitName::validation ? validation : test;
  }
  const std::vector<LabeledTriple>& part(SplitName s) const {
    return s == SplitName::train ? train : s == SplitName::validation ? validation : test;
  }
  std::size_t size() const noexcept { return train.size() + validation.size() + test.size(); }
};

inline constexpr std::array<SplitName, 3> kAllSplits = {SplitName::train, SplitName::validation, SplitName::test};

/// Largest-remainder apportionment of `total` units over `fractions`;
/// remainder ties go to the earlier slot.
inline std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(total) * fractions[i];
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

/// Splits triples so a pair and its inverse (and duplicates) always share a
/// split: unordered pairs are the sampling unit, shuffled under `seed` and
/// apportioned by largest remainder.
inline DatasetSplit make_splits(std::span<const LabeledTriple> triples,
                                const std::array<double, 3>& fractions, std::uint64_t seed) {
  double sum = 0;
  for (double f : fractions) {
    if (f < 0) throw ConfigError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::map<OrderedPair, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto key = pair_key(triples[i].topic_a, triples[i].topic_b);
    if (key.second < key.first) std::swap(key.first, key.second);
    auto [it, fresh] = group_of.emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
  Rng rng(seed);
  rng.shuffle(std::span(order));

  const auto counts = apportion(groups.size(), fractions);
  DatasetSplit split;
  split.seed = seed;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t n = 0; n < counts[s]; ++n, ++pos)
      for (auto idx : groups[order[pos]]) split.part(kAllSplits[s]).push_back(triples[idx]);
  return split;
}

struct SplitViolation {
  enum class Kind { inverse_separated, duplicate_across_splits };
  Kind kind;
  OrderedPair pair;
  OrderedPair other;  // the inverse, or the pair itself for duplicates
  SplitName split_a;
  SplitName split_b;

  std::string describe() const {
    const bool inv = kind == Kind::inverse_separated;
    return std::string(inv ? "inverse separated: (" : "duplicate across splits: (") + pair.first + ", " +
           pair.second + ") in " + std::string(to_string(split_a)) + ", (" + other.first + ", " + other.second +
           ") in " + std::string(to_string(split_b));
  }
};

/// Every place where a pair and its inverse sit in different splits, plus
/// ordered pairs repeated across splits.
inline std::vector<SplitViolation> check_split_integrity(const DatasetSplit& split) {
  std::map<OrderedPair, std::set<SplitName>> where;
  for (auto s : kAllSplits)
    for (const auto& t : split.part(s)) where[pair_key(t.topic_a, t.topic_b)].insert(s);

  std::vector<SplitViolation> out;
  for (const auto& [key, splits] : where) {
    for (auto a = splits.begin(); a != splits.end(); ++a)
      for (auto b = std::next(a); b != splits.end(); ++b)
        out.push_back({SplitViolation::Kind::duplicate_across_splits, key, key, *a, *b});
    if (!(key.first < key.second)) continue;
    auto inv = where.find({key.second, key.first});
    if (inv == where.end()) continue;
    for (auto sa : splits)
      for (auto sb : inv->second)
        if (sa != sb) out.push_back({SplitViolation::Kind::inverse_separated, key, inv->first, sa, sb});
  }
  return out;
}

struct SplitSummary {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> fractions{};
  std::vector<std::string> findings;
};

/// Reports size/fraction discrepancies against the intended fractions and,
/// when given, a stated dataset total. Informational only.
inline SplitSummary summarize_split(const DatasetSplit& split, const std::array<double, 3>& intended,
                                    std::optional<std::size_t> stated_total = std::nullopt,
                                    double tolerance = 0.005) {
  SplitSummary s;
  const auto total = split.size();
  for (std::size_t i = 0; i < 3; ++i) {
    s.sizes[i] = split.part(kAllSplits[i]).size();
    s.fractions[i] = total ? static_cast<double>(s.sizes[i]) / static_cast<double>(total) : 0.0;
    if (total && std::abs(s.fractions[i] - intended[i]) > tolerance) {
      std::ostringstream msg;
      msg << to_string(kAllSplits[i]) << " holds " << s.sizes[i] << " of " << total << " triples (" << s.fractions[i]
          << "), intended " << intended[i];
      s.findings.push_back(msg.str());
    }
  }
  if (stated_total && *stated_total != total) {
    s.findings.push_back("split sizes sum to " + std::to_string(total) + " but the stated total is " +
                         std::to_string(*stated_total));
    for (std::size_t i = 0; i < 3; ++i) {
      const double share = static_cast<double>(s.sizes[i]) / static_cast<double>(*stated_total);
      if (std::abs(share - intended[i]) > tolerance) {
        std::ostringstream msg;
        msg << to_string(kAllSplits[i]) << " is " << share << " of the stated total, intended " << intended[i];
        s.findings.push_back(msg.str());
      }
    }
  }
  return s;
}

}  // namespace ontogen
