#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ontogen/errors.hpp"

namespace ontogen {

/// The four relation classes, in the fixed order used for one-hot
/// encodings and argmax tie-breaking.
enum class RelationClass : std::uint8_t { supertopic = 0, subtopic = 1, same_as = 2, other = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<RelationClass, kNumClasses> kAllClasses = {
    RelationClass::supertopic, RelationClass::subtopic, RelationClass::same_as,
    RelationClass::other};

constexpr std::size_t index_of(RelationClass c) noexcept { return static_cast<std::size_t>(c); }

constexpr RelationClass class_at(std::size_t i) { return kAllClasses.at(i); }

constexpr RelationClass inverse(RelationClass c) noexcept {
  switch (c) {
    case RelationClass::supertopic:
      return RelationClass::subtopic;
    case RelationClass::subtopic:
      return RelationClass::supertopic;
    default:
      return c;
  }
}

inline std::string_view to_string(RelationClass c) noexcept {
  switch (c) {
    case RelationClass::supertopic:
      return "supertopic";
    case RelationClass::subtopic:
      return "subtopic";
    case RelationClass::same_as:
      return "same-as";
    case RelationClass::other:
      return "other";
  }
  return "other";
}

/// Accepts "same-as" and "same_as"; case-sensitive otherwise.
inline std::optional<RelationClass> try_parse_relation(std::string_view s) noexcept {
  if (s == "supertopic") return RelationClass::supertopic;
  if (s == "subtopic") return RelationClass::subtopic;
  if (s == "same-as" || s == "same_as") return RelationClass::same_as;
  if (s == "other") return RelationClass::other;
  return std::nullopt;
}

inline RelationClass parse_relation(std::string_view s) {
  if (auto c = try_parse_relation(s)) return *c;
  throw ParseError("unknown relation class '" + std::string(s) + "'");
}

}  // namespace ontogen
