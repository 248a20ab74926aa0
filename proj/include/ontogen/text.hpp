#pragma once

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <string>
#include <string_view>
#include <vector>

#include "ontogen/errors.hpp"

namespace ontogen {

namespace detail {

inline bool is_word_char(UChar32 c) {
  const auto mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_L_MASK | U_GC_M_MASK | U_GC_N_MASK)) != 0;
}

inline const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw Error("ICU NFC normalizer unavailable");
  return *n;
}

}  // namespace detail

/// Canonical text form used for all matching: NFC, Unicode default case
/// folding, every character that is not a letter, mark or digit mapped to a
/// space, whitespace collapsed and trimmed. Idempotent. Invalid UTF-8 bytes
/// are treated as separators.
inline std::string normalize_text(std::string_view raw) {
  if (raw.empty()) return {};
  const auto& nfc = detail::nfc();
  UErrorCode status = U_ZERO_ERROR;

  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  s = nfc.normalize(s, status);
  s.foldCase(U_FOLD_CASE_DEFAULT);
  s = nfc.normalize(s, status);
  if (U_FAILURE(status)) throw Error("ICU normalization failed");

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length();) {
    const UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (detail::is_word_char(c)) {
      if (pending_space && !out.isEmpty()) out.append(static_cast<UChar>(u' '));
      pending_space = false;
      out.append(c);
    } else {
      pending_space = true;
    }
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

/// Splits already-normalized text on single spaces.
inline std::vector<std::string_view> split_tokens(std::string_view normalized) {
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) tokens.push_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Splits a tab-separated line; empty fields are preserved.
inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto end = line.find('\t', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return fields;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace ontogen
