#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <unicode/unistr.h>

#include "ontogen/dataset.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/text.hpp"

namespace ontogen {

// ---------------------------------------------------------------------------
// Language-model prediction providers
// ---------------------------------------------------------------------------

/// What to do when a provider has no prediction for a pair.
enum class MissingPolicy { error, feature_only };

/// Source of an external per-pair relation class (a fine-tuned encoder, an
/// LLM, another learner's output). nullopt means "no prediction; use the
/// all-zero one-hot" and is only returned under MissingPolicy::feature_only.
class LmProvider {
 public:
  virtual ~LmProvider() = default;
  virtual std::optional<RelationClass> get_prediction(const std::string& topic_a, const std::string& topic_b) = 0;
};

inline std::string describe_pair(std::string_view a, std::string_view b) {
  return "(" + std::string(a) + ", " + std::string(b) + ")";
}

/// Tab-separated topic_a, topic_b, predicted_class table.
class TableLmProvider final : public LmProvider {
 public:
  explicit TableLmProvider(std::map<OrderedPair, RelationClass> table, MissingPolicy policy = MissingPolicy::error)
      : table_(std::move(table)), policy_(policy) {}

  static TableLmProvider load(const std::filesystem::path& path, MissingPolicy policy = MissingPolicy::error) {
    auto file = load_triples(path);
    std::map<OrderedPair, RelationClass> table;
    for (const auto& t : file.triples) table[pair_key(t.topic_a, t.topic_b)] = t.relation;
    return TableLmProvider(std::move(table), policy);
  }

  std::optional<RelationClass> get_prediction(const std::string& a, const std::string& b) override {
    auto it = table_.find(pair_key(a, b));
    if (it != table_.end()) return it->second;
    if (policy_ == MissingPolicy::feature_only) return std::nullopt;
    throw ProviderError("no prediction for pair " + describe_pair(a, b));
  }

  const std::map<OrderedPair, RelationClass>& table() const noexcept { return table_; }

 private:
  std::map<OrderedPair, RelationClass> table_;
  MissingPolicy policy_;
};

struct RemoteProviderConfig {
  std::string endpoint = "http://127.0.0.1:8090";  // scheme://host:port
  std::string path = "/predict";
  int timeout_ms = 5000;
  int retries = 3;
  int backoff_base_ms = 100;
};

namespace detail {

/// POSTs a JSON body, retrying transport failures and 5xx responses with
/// exponential backoff (base, 2·base, 4·base, ...). Returns the parsed body.
inline nlohmann::json post_with_retry(const RemoteProviderConfig& cfg, const nlohmann::json& body,
                                      const std::string& what) {
  httplib::Client client(cfg.endpoint);
  const auto ms = std::chrono::milliseconds(cfg.timeout_ms);
  client.set_connection_timeout(ms);
  client.set_read_timeout(ms);
  client.set_write_timeout(ms);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(cfg.backoff_base_ms) << (attempt - 1)));
    auto res = client.Post(cfg.path, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProviderError(what + ": HTTP " + std::to_string(res->status));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw ProviderError(what + ": malformed response body");
    return parsed;
  }
  throw ProviderError(what + ": gave up after " + std::to_string(cfg.retries + 1) + " attempts (" + last_error + ")");
}

}  // namespace detail

/// Request {"topic_a": ..., "topic_b": ...}; response {"class": "<relation>"}.
class RemoteLmProvider final : public LmProvider {
 public:
  explicit RemoteLmProvider(RemoteProviderConfig cfg) : cfg_(std::move(cfg)) {}

  std::optional<RelationClass> get_prediction(const std::string& a, const std::string& b) override {
    const auto what = "lm provider, pair " + describe_pair(a, b);
    auto body = detail::post_with_retry(cfg_, {{"topic_a", a}, {"topic_b", b}}, what);
    auto it = body.find("class");
    if (it == body.end() || !it->is_string()) throw ProviderError(what + ": response has no class");
    auto c = try_parse_relation(it->get<std::string>());
    if (!c) throw ProviderError(what + ": unknown class '" + it->get<std::string>() + "'");
    return c;
  }

 private:
  RemoteProviderConfig cfg_;
};

/// Queries many pairs with up to `max_in_flight` concurrent requests. Results
/// are positionally aligned with `pairs`; the first failure is rethrown.
inline std::vector<std::optional<RelationClass>> get_predictions(LmProvider& provider, std::span<const OrderedPair> pairs,
                                                                 std::size_t max_in_flight = 1) {
  std::vector<std::optional<RelationClass>> out(pairs.size());
  if (max_in_flight <= 1 || pairs.size() <= 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = provider.get_prediction(pairs[i].first, pairs[i].second);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(max_in_flight, pairs.size()); ++w)
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();) {
          try {
            out[i] = provider.get_prediction(pairs[i].first, pairs[i].second);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding providers
// ---------------------------------------------------------------------------

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const std::string& label) = 0;
};

/// Signed feature hashing of character trigrams of "#label#", L2-normalized.
/// Dependency-free default; similarity reflects surface overlap only.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256) : dim_(dim) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
  }

  std::vector<double> embed(const std::string& label) override {
    std::vector<double> v(dim_, 0.0);
    const std::string norm = "#" + normalize_text(label) + "#";
    auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(norm.data(), static_cast<int32_t>(norm.size())));
    std::vector<UChar32> cps;
    for (int32_t i = 0; i < u.length();) {
      const UChar32 c = u.char32At(i);
      cps.push_back(c);
      i += U16_LENGTH(c);
    }
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
      std::uint64_t h = 0xcbf29ce484222325ULL;
      for (std::size_t k = 0; k < 3; ++k) {
        h ^= static_cast<std::uint64_t>(cps[i + k]);
        h *= 0x100000001b3ULL;
      }
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm2 = 0;
    for (double x : v) norm2 += x * x;
    if (norm2 > 0)
      for (double& x : v) x /= std::sqrt(norm2);
    return v;
  }

 private:
  std::size_t dim_;
};

/// Request {"label": ...}; response {"vector": [..]}.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteProviderConfig cfg) : cfg_(std::move(cfg)) {}

  std::vector<double> embed(const std::string& label) override {
    const auto what = "embedding provider, label '" + label + "'";
    auto body = detail::post_with_retry(cfg_, {{"label", label}}, what);
    auto it = body.find("vector");
    if (it == body.end() || !it->is_array() || it->empty()) throw ProviderError(what + ": response has no vector");
    std::vector<double> v;
    for (const auto& x : *it) {
      if (!x.is_number()) throw ProviderError(what + ": non-numeric vector entry");
      v.push_back(x.get<double>());
    }
    return v;
  }

 private:
  RemoteProviderConfig cfg_;
};

/// Cosine similarity; 0 when either vector is all zeros.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ProviderError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace ontogen
