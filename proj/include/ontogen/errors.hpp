#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ontogen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (empty lexicon, overlapping allow/deny lists, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A topic, pair, or root that is not known to the structure being queried.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Input file or payload that does not follow its documented format.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Feature vector or model whose schema does not match what the consumer expects.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A feature that is mathematically undefined for the given counts.
class UndefinedFeatureError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

/// A structure whose declared invariants do not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// An artifact or log whose recorded digest no longer matches its input.
class DigestMismatchError : public Error {
 public:
  using Error::Error;
};

/// A stage whose upstream artifact has not been produced.
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// Replay of an edit log hit an edit that is now rejected.
class ReplayError : public Error {
 public:
  ReplayError(const std::string& what, std::uint64_t edit_id) : Error(what), edit_id_(edit_id) {}
  std::uint64_t edit_id() const noexcept { return edit_id_; }

 private:
  std::uint64_t edit_id_;
};

class ServiceNotReady : public Error {
 public:
  using Error::Error;
};

}  // namespace ontogen
