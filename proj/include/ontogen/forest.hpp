#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ontogen/errors.hpp"
#include "ontogen/features.hpp"
#include "ontogen/metrics.hpp"
#include "ontogen/providers.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/rng.hpp"

namespace ontogen {

struct ForestHyperparams {
  std::size_t n_trees = 200;
  std::size_t max_depth = 0;           // 0 = unlimited
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(dim))
  bool bootstrap = true;

  std::size_t resolved_features(std::size_t dim) const {
    if (features_per_split) return std::min(features_per_split, dim);
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
  }
  bool operator==(const ForestHyperparams&) const = default;
};

/// Flat binary tree. Internal nodes route x[feature] >= threshold to the
/// right child; every node keeps the class histogram of the training
/// samples (with bootstrap multiplicity) that reached it.
struct DecisionTree {
  static constexpr std::int32_t kLeaf = -1;

  std::vector<std::int32_t> feature;
  std::vector<double> threshold;
  std::vector<std::uint32_t> left;
  std::vector<std::uint32_t> right;
  std::vector<std::array<std::uint64_t, kNumClasses>> counts;

  std::size_t size() const noexcept { return feature.size(); }
  bool is_leaf(std::size_t n) const { return feature.at(n) == kLeaf; }

  std::size_t add_leaf(const std::array<std::uint64_t, kNumClasses>& c) {
    feature.push_back(kLeaf);
    threshold.push_back(0.0);
    left.push_back(0);
    right.push_back(0);
    counts.push_back(c);
    return size() - 1;
  }

  std::size_t leaf_for(std::span<const double> x) const {
    std::size_t n = 0;
    while (!is_leaf(n)) n = x[static_cast<std::size_t>(feature[n])] >= threshold[n] ? right[n] : left[n];
    return n;
  }

  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  FeatureSchema schema;
  ForestHyperparams hyperparams;
  std::uint64_t seed = 0;

  bool operator==(const ForestModel&) const = default;
};

struct LabeledExample {
  FusedFeatureVector vector;
  RelationClass label = RelationClass::other;
  OrderedPair pair;  // optional provenance; used in error messages
};

struct RelationPrediction {
  OrderedPair pair;
  std::array<double, kNumClasses> probabilities{};
  RelationClass predicted = RelationClass::supertopic;
};

/// Index of the largest value; ties resolve to the earliest class.
inline RelationClass argmax_class(const std::array<double, kNumClasses>& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c)
    if (p[c] > p[best]) best = c;
  return class_at(best);
}

namespace detail {

struct TrainingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> x;  // row-major
  std::vector<std::uint8_t> y;

  double at(std::size_t r, std::size_t f) const { return x[r * dim + f]; }
};

struct SplitChoice {
  std::int32_t feature = DecisionTree::kLeaf;
  double threshold = 0.0;
  double score = -1.0;
};

inline std::array<std::uint64_t, kNumClasses> histogram(const TrainingMatrix& m, std::span<const std::uint32_t> idx) {
  std::array<std::uint64_t, kNumClasses> h{};
  for (auto i : idx) ++h[m.y[i]];
  return h;
}

/// Best Gini split on one feature; maximizes sum over children of
/// (sum_c n_c^2) / n, equivalent to minimizing weighted Gini impurity.
inline void best_split_on(const TrainingMatrix& m, std::span<const std::uint32_t> idx, std::size_t f,
                          std::size_t min_leaf, const std::array<std::uint64_t, kNumClasses>& total,
                          std::vector<std::pair<double, std::uint8_t>>& scratch, SplitChoice& best) {
  scratch.clear();
  for (auto i : idx) scratch.emplace_back(m.at(i, f), m.y[i]);
  std::sort(scratch.begin(), scratch.end());
  std::array<double, kNumClasses> lc{}, rc{};
  for (std::size_t c = 0; c < kNumClasses; ++c) rc[c] = static_cast<double>(total[c]);
  const std::size_t n = scratch.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    lc[scratch[i].second] += 1;
    rc[scratch[i].second] -= 1;
    const std::size_t nl = i + 1, nr = n - nl;
    if (!(scratch[i].first < scratch[i + 1].first)) continue;
    if (nl < min_leaf || nr < min_leaf) continue;
    double sl = 0, sr = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      sl += lc[c] * lc[c];
      sr += rc[c] * rc[c];
    }
    const double score = sl / static_cast<double>(nl) + sr / static_cast<double>(nr);
    if (score > best.score) {
      double thr = scratch[i].first + (scratch[i + 1].first - scratch[i].first) / 2;
      if (!(thr > scratch[i].first)) thr = scratch[i + 1].first;
      best = {static_cast<std::int32_t>(f), thr, score};
    }
  }
}

inline DecisionTree grow_tree(const TrainingMatrix& m, const ForestHyperparams& hp, std::uint64_t tree_seed) {
  Rng rng(tree_seed);
  std::vector<std::uint32_t> sample(m.rows);
  if (hp.bootstrap) {
    for (auto& s : sample) s = static_cast<std::uint32_t>(rng.below(m.rows));
  } else {
    for (std::size_t i = 0; i < m.rows; ++i) sample[i] = static_cast<std::uint32_t>(i);
  }
  const std::size_t per_split = hp.resolved_features(m.dim);
  const std::size_t min_leaf = std::max<std::size_t>(1, hp.min_leaf);

  DecisionTree tree;
  struct Task {
    std::size_t begin, end, depth, node;
  };
  tree.add_leaf(histogram(m, sample));
  std::vector<Task> stack{{0, sample.size(), 0, 0}};
  std::vector<std::size_t> features(m.dim);
  std::vector<std::pair<double, std::uint8_t>> scratch;

  while (!stack.empty()) {
    const Task t = stack.back();
    stack.pop_back();
    const auto counts = tree.counts[t.node];
    const auto nonzero = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
    const std::size_t n = t.end - t.begin;
    if (nonzero <= 1 || n < 2 * min_leaf || (hp.max_depth && t.depth >= hp.max_depth)) continue;

    std::span<const std::uint32_t> idx(sample.data() + t.begin, n);
    for (std::size_t f = 0; f < m.dim; ++f) features[f] = f;
    rng.shuffle(std::span(features));
    SplitChoice best;
    // Sample `per_split` features; keep drawing only while none yields a valid split.
    for (std::size_t k = 0; k < m.dim; ++k) {
      if (k >= per_split && best.feature != DecisionTree::kLeaf) break;
      best_split_on(m, idx, features[k], min_leaf, counts, scratch, best);
    }
    if (best.feature == DecisionTree::kLeaf) continue;

    auto mid = std::partition(sample.begin() + static_cast<std::ptrdiff_t>(t.begin),
                              sample.begin() + static_cast<std::ptrdiff_t>(t.end), [&](std::uint32_t i) {
                                return m.at(i, static_cast<std::size_t>(best.feature)) < best.threshold;
                              });
    const std::size_t split_at = static_cast<std::size_t>(mid - sample.begin());
    const std::span<const std::uint32_t> left_idx(sample.data() + t.begin, split_at - t.begin);
    const std::span<const std::uint32_t> right_idx(sample.data() + split_at, t.end - split_at);
    const auto l = tree.add_leaf(histogram(m, left_idx));
    const auto r = tree.add_leaf(histogram(m, right_idx));
    tree.feature[t.node] = best.feature;
    tree.threshold[t.node] = best.threshold;
    tree.left[t.node] = static_cast<std::uint32_t>(l);
    tree.right[t.node] = static_cast<std::uint32_t>(r);
    stack.push_back({split_at, t.end, t.depth + 1, r});
    stack.push_back({t.begin, split_at, t.depth + 1, l});
  }
  return tree;
}

}  // namespace detail

/// Per-tree seed; independent of thread count and scheduling.
inline std::uint64_t tree_seed(std::uint64_t master, std::size_t tree) {
  return mix_seed(master ^ mix_seed(static_cast<std::uint64_t>(tree) + 1));
}

/// Grows a Random Forest: bootstrap resamples (when enabled) and Gini
/// threshold splits over a random feature subset per node. Deterministic in
/// (dataset, hyperparams, seed); `threads` only affects wall time.
inline ForestModel train_forest(std::span<const LabeledExample> dataset, const ForestHyperparams& hp,
                                std::uint64_t seed, std::size_t threads = 0) {
  if (dataset.empty()) throw ConfigError("cannot train on an empty dataset");
  if (hp.n_trees == 0) throw ConfigError("n_trees must be positive");
  const auto schema = dataset.front().vector.schema;
  detail::TrainingMatrix m;
  m.rows = dataset.size();
  m.dim = schema.dim();
  m.x.reserve(m.rows * m.dim);
  for (const auto& ex : dataset) {
    if (ex.vector.schema != schema || ex.vector.numeric.size() != schema.numeric_dim())
      throw SchemaError("training vectors do not share one feature schema");
    const auto v = ex.vector.values();
    m.x.insert(m.x.end(), v.begin(), v.end());
    m.y.push_back(static_cast<std::uint8_t>(index_of(ex.label)));
  }

  ForestModel model{std::vector<DecisionTree>(hp.n_trees), schema, hp, seed};
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, hp.n_trees);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < hp.n_trees;) model.trees[t] = detail::grow_tree(m, hp, tree_seed(seed, t));
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  return model;
}

/// Mean of per-tree leaf class distributions, argmax with fixed-order ties.
inline RelationPrediction predict(const ForestModel& model, const FusedFeatureVector& v, OrderedPair pair = {}) {
  if (v.schema != model.schema || v.numeric.size() != model.schema.numeric_dim())
    throw SchemaError("vector schema '" + v.schema.id() + "' does not match model schema '" + model.schema.id() + "'");
  if (model.trees.empty()) throw SchemaError("model has no trees");
  const auto x = v.values();
  RelationPrediction out;
  out.pair = std::move(pair);
  for (const auto& tree : model.trees) {
    const auto& c = tree.counts[tree.leaf_for(x)];
    double n = 0;
    for (auto k : c) n += static_cast<double>(k);
    if (n == 0) continue;
    for (std::size_t k = 0; k < kNumClasses; ++k) out.probabilities[k] += static_cast<double>(c[k]) / n;
  }
  double sum = 0;
  for (double p : out.probabilities) sum += p;
  if (sum > 0)
    for (double& p : out.probabilities) p /= sum;
  out.predicted = argmax_class(out.probabilities);
  return out;
}

/// Confusion-matrix evaluation over exactly `testset`. When a provider is
/// given, each example's one-hot block is replaced by the provider's class
/// for its pair; a provider failure aborts with the pair identified.
inline EvalReport evaluate(const ForestModel& model, std::span<const LabeledExample> testset,
                           LmProvider* lm_provider = nullptr) {
  std::vector<RelationClass> gold, pred;
  for (const auto& ex : testset) {
    FusedFeatureVector v = ex.vector;
    if (lm_provider) {
      std::optional<RelationClass> lm;
      try {
        lm = lm_provider->get_prediction(ex.pair.first, ex.pair.second);
      } catch (const Error& e) {
        throw ProviderError("evaluation aborted at pair " + describe_pair(ex.pair.first, ex.pair.second) + ": " +
                            e.what());
      }
      v.lm_onehot = {};
      if (lm) v.lm_onehot[index_of(*lm)] = 1;
    }
    gold.push_back(ex.label);
    pred.push_back(predict(model, v).predicted);
  }
  return evaluate_predictions(gold, pred);
}

// ---------------------------------------------------------------------------
// Model file: one JSON document with a versioned header and the tree list.
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kModelFormat = "ontogen-forest";

inline std::string serialize_model(const ForestModel& model) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["format_version"] = kModelFormatVersion;
  j["feature_schema"] = model.schema.id();
  j["feature_dim"] = model.schema.dim();
  j["hyperparams"] = {{"n_trees", model.hyperparams.n_trees},
                      {"max_depth", model.hyperparams.max_depth},
                      {"min_leaf", model.hyperparams.min_leaf},
                      {"features_per_split", model.hyperparams.features_per_split},
                      {"bootstrap", model.hyperparams.bootstrap}};
  j["seed"] = model.seed;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : model.trees)
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"counts", t.counts}});
  return j.dump();
}

inline ForestModel parse_model(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("model file is not a JSON object");
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw ParseError("not an ontogen forest model");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) throw ParseError("unsupported model format version " + std::to_string(version));
    ForestModel m;
    m.schema = FeatureSchema::from_id(j.at("feature_schema").get<std::string>());
    if (j.at("feature_dim").get<std::size_t>() != m.schema.dim()) throw ParseError("feature_dim disagrees with schema");
    const auto& hp = j.at("hyperparams");
    m.hyperparams = {hp.at("n_trees").get<std::size_t>(), hp.at("max_depth").get<std::size_t>(),
                     hp.at("min_leaf").get<std::size_t>(), hp.at("features_per_split").get<std::size_t>(),
                     hp.at("bootstrap").get<bool>()};
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      jt.at("feature").get_to(t.feature);
      jt.at("threshold").get_to(t.threshold);
      jt.at("left").get_to(t.left);
      jt.at("right").get_to(t.right);
      jt.at("counts").get_to(t.counts);
      const auto n = t.feature.size();
      if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.counts.size() != n)
        throw ParseError("malformed tree arrays");
      for (std::size_t i = 0; i < n; ++i) {
        if (t.feature[i] == DecisionTree::kLeaf) continue;
        if (t.feature[i] < 0 || static_cast<std::size_t>(t.feature[i]) >= m.schema.dim())
          throw ParseError("split feature outside schema");
        if (t.left[i] <= i || t.right[i] <= i || t.left[i] >= n || t.right[i] >= n)
          throw ParseError("tree child index out of range");
      }
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const ForestModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_model(m) << '\n';
}

inline ForestModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(text);
}

}  // namespace ontogen
