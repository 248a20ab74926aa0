#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ontogen/errors.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/text.hpp"
#include "ontogen/topic_index.hpp"

namespace ontogen {

/// coocc/occ_a - coocc/occ_b. Positive values mean A co-occurs with B in a
/// larger share of its documents than B does with A, i.e. A looks like the
/// narrower topic of the pair.
inline double compute_subsumption(std::uint64_t occ_a, std::uint64_t occ_b, std::uint64_t coocc_ab) {
  if (occ_a == 0 || occ_b == 0)
    throw UndefinedFeatureError("subsumption undefined for zero occurrence count");
  if (coocc_ab > std::min(occ_a, occ_b))
    throw InvariantError("co-occurrence exceeds an occurrence count");
  const double c = static_cast<double>(coocc_ab);
  return c / static_cast<double>(occ_a) - c / static_cast<double>(occ_b);
}

struct AggregateFeatures {
  std::uint64_t occ_a = 0;
  std::uint64_t occ_b = 0;
  std::uint64_t coocc_ab = 0;
  double subsumption = 0.0;

  std::array<double, 4> values() const {
    return {static_cast<double>(occ_a), static_cast<double>(occ_b), static_cast<double>(coocc_ab),
            subsumption};
  }
  bool operator==(const AggregateFeatures&) const = default;
};

/// One block per window year, oldest first.
struct YearlyFeatures {
  std::vector<AggregateFeatures> per_year;
  bool operator==(const YearlyFeatures&) const = default;
};

using NumericFeatures = std::variant<AggregateFeatures, YearlyFeatures>;

enum class FeatureMode { aggregate, yearly };
enum class OccurrenceUnit { doc_freq, mentions };

namespace detail {
inline AggregateFeatures block(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // zero-occurrence fallback: neutral subsumption
  AggregateFeatures f{a, b, c, 0.0};
  if (a > 0 && b > 0) f.subsumption = compute_subsumption(a, b, c);
  return f;
}
}  // namespace detail

/// Features for the ordered pair (a, b) of topic ids.
inline NumericFeatures compute_features(std::string_view a, std::string_view b, const OccurrenceStats& stats,
                                        FeatureMode mode, OccurrenceUnit unit = OccurrenceUnit::doc_freq) {
  const auto ia = stats.index_of(a);
  const auto ib = stats.index_of(b);
  const bool df = unit == OccurrenceUnit::doc_freq;
  if (mode == FeatureMode::aggregate) {
    return detail::block(df ? stats.total_doc_freq(ia) : stats.total_mentions(ia),
                         df ? stats.total_doc_freq(ib) : stats.total_mentions(ib),
                         stats.total_cooccurrence(ia, ib));
  }
  YearlyFeatures out;
  for (std::size_t y = 0; y < stats.years(); ++y)
    out.per_year.push_back(detail::block(df ? stats.doc_freq(ia, y) : stats.mentions(ia, y),
                                         df ? stats.doc_freq(ib, y) : stats.mentions(ib, y),
                                         stats.cooccurrence(ia, ib, y)));
  return out;
}

inline std::vector<double> flatten(const NumericFeatures& f) {
  std::vector<double> out;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AggregateFeatures>) {
          const auto a = v.values();
          out.assign(a.begin(), a.end());
        } else {
          for (const auto& b : v.per_year) {
            const auto a = b.values();
            out.insert(out.end(), a.begin(), a.end());
          }
        }
      },
      f);
  return out;
}

/// Identifies the layout of a fused vector: numeric block width plus the
/// trailing four-wide one-hot block.
struct FeatureSchema {
  FeatureMode mode = FeatureMode::aggregate;
  std::size_t window_years = 1;  // blocks in yearly mode

  std::size_t numeric_dim() const { return mode == FeatureMode::aggregate ? 4 : 4 * window_years; }
  std::size_t dim() const { return numeric_dim() + kNumClasses; }

  std::string id() const {
    return mode == FeatureMode::aggregate ? "aggregate4+lm4.v1"
                                          : "yearly" + std::to_string(numeric_dim()) + "+lm4.v1";
  }

  static FeatureSchema from_id(std::string_view id) {
    if (id == "aggregate4+lm4.v1") return {FeatureMode::aggregate, 1};
    constexpr std::string_view prefix = "yearly", suffix = "+lm4.v1";
    if (id.starts_with(prefix) && id.ends_with(suffix)) {
      const auto num = id.substr(prefix.size(), id.size() - prefix.size() - suffix.size());
      std::size_t n = 0;
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), n);
      if (ec == std::errc{} && p == num.data() + num.size() && n > 0 && n % 4 == 0)
        return {FeatureMode::yearly, n / 4};
    }
    throw SchemaError("unknown feature schema '" + std::string(id) + "'");
  }

  static FeatureSchema of(const NumericFeatures& f) {
    if (std::holds_alternative<AggregateFeatures>(f)) return {FeatureMode::aggregate, 1};
    return {FeatureMode::yearly, std::get<YearlyFeatures>(f).per_year.size()};
  }

  bool operator==(const FeatureSchema&) const = default;
};

struct FusedFeatureVector {
  FeatureSchema schema;
  std::vector<double> numeric;
  std::array<std::uint8_t, kNumClasses> lm_onehot{};

  std::optional<RelationClass> lm_class() const {
    for (std::size_t i = 0; i < kNumClasses; ++i)
      if (lm_onehot[i]) return class_at(i);
    return std::nullopt;
  }

  /// Numeric block followed by the one-hot block (supertopic, subtopic, same-as, other).
  std::vector<double> values() const {
    std::vector<double> v = numeric;
    for (auto b : lm_onehot) v.push_back(b);
    return v;
  }

  bool operator==(const FusedFeatureVector&) const = default;
};

inline FusedFeatureVector fuse(const NumericFeatures& numeric, std::optional<RelationClass> lm) {
  FusedFeatureVector v{FeatureSchema::of(numeric), flatten(numeric), {}};
  if (lm) v.lm_onehot[index_of(*lm)] = 1;
  return v;
}

/// String-label overload; an unrecognized label is an encoding error.
inline FusedFeatureVector fuse(const NumericFeatures& numeric, std::optional<std::string_view> lm_label) {
  std::optional<RelationClass> lm;
  if (lm_label) {
    lm = try_parse_relation(*lm_label);
    if (!lm) throw SchemaError("cannot encode unknown relation class '" + std::string(*lm_label) + "'");
  }
  return fuse(numeric, lm);
}

// ---------------------------------------------------------------------------
// Feature dump: '#schema=<id>' header, then tab-separated
// topic_a, topic_b, <numeric block>, lm_class ('-' when absent).
// ---------------------------------------------------------------------------

struct FeatureRow {
  std::string topic_a;
  std::string topic_b;
  FusedFeatureVector vector;
  bool operator==(const FeatureRow&) const = default;
};

namespace detail {
inline std::string format_double(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("bad numeric field '" + std::string(s) + "'", line);
  return v;
}
}  // namespace detail

inline void write_feature_rows(std::ostream& out, const FeatureSchema& schema,
                               std::span<const FeatureRow> rows) {
  out << "#schema=" << schema.id() << '\n';
  for (const auto& r : rows) {
    if (r.vector.schema != schema) throw SchemaError("feature row schema mismatch for dump");
    out << r.topic_a << '\t' << r.topic_b;
    for (double x : r.vector.numeric) out << '\t' << detail::format_double(x);
    const auto lm = r.vector.lm_class();
    out << '\t' << (lm ? to_string(*lm) : "-") << '\n';
  }
}

struct FeatureDump {
  FeatureSchema schema;
  std::vector<FeatureRow> rows;
};

/// Reads a dump; without a schema header the schema is inferred from the column count.
inline FeatureDump read_feature_rows(std::istream& in) {
  FeatureDump dump;
  std::optional<FeatureSchema> schema;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = strip_cr(line);
    if (view.starts_with("#schema=")) {
      schema = FeatureSchema::from_id(view.substr(8));
      continue;
    }
    if (view.empty() || view.front() == '#') continue;
    const auto f = split_tabs(view);
    if (f.size() < 7) throw ParseError("feature row has too few fields", lineno);
    const std::size_t numeric = f.size() - 3;
    if (!schema) {
      if (numeric == 4) schema = FeatureSchema{FeatureMode::aggregate, 1};
      else if (numeric % 4 == 0) schema = FeatureSchema{FeatureMode::yearly, numeric / 4};
      else throw ParseError("cannot infer feature schema from row width", lineno);
    }
    if (numeric != schema->numeric_dim()) throw ParseError("feature row width disagrees with schema", lineno);
    FeatureRow row{std::string(f[0]), std::string(f[1]), {*schema, {}, {}}};
    for (std::size_t i = 0; i < numeric; ++i) row.vector.numeric.push_back(detail::parse_double(f[2 + i], lineno));
    const auto lm = f.back();
    if (lm != "-" && !lm.empty()) {
      auto c = try_parse_relation(lm);
      if (!c) throw ParseError("unknown lm_class '" + std::string(lm) + "'", lineno);
      row.vector.lm_onehot[index_of(*c)] = 1;
    }
    dump.rows.push_back(std::move(row));
  }
  dump.schema = schema.value_or(FeatureSchema{});
  return dump;
}

}  // namespace ontogen
