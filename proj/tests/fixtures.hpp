#pragma once

// Shared test fixtures: hand-computed metric fixture, synthetic classifier
// datasets, random ontologies and random digraphs.

#include <array>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ontogen/features.hpp"
#include "ontogen/forest.hpp"
#include "ontogen/metrics.hpp"
#include "ontogen/ontology.hpp"
#include "ontogen/relation.hpp"

namespace fixture {

using ontogen::RelationClass;

// 12 examples; confusion[gold][pred]:
//   supertopic  3 1 0 0
//   subtopic    0 2 0 1
//   same-as     1 0 2 0
//   other       0 0 0 2
struct MetricsFixture {
  std::vector<RelationClass> gold, pred;
  // Hand-computed from the matrix above.
  double accuracy = 9.0 / 12.0;
  std::array<double, 4> precision{3.0 / 4.0, 2.0 / 3.0, 1.0, 2.0 / 3.0};
  std::array<double, 4> recall{3.0 / 4.0, 2.0 / 3.0, 2.0 / 3.0, 1.0};
  std::array<double, 4> f1{3.0 / 4.0, 2.0 / 3.0, 4.0 / 5.0, 4.0 / 5.0};
  double macro_f1 = (3.0 / 4.0 + 2.0 / 3.0 + 4.0 / 5.0 + 4.0 / 5.0) / 4.0;
};

inline MetricsFixture metrics_fixture() {
  using R = RelationClass;
  MetricsFixture f;
  auto add = [&](R g, R p, int n) {
    for (int i = 0; i < n; ++i) {
      f.gold.push_back(g);
      f.pred.push_back(p);
    }
  };
  add(R::supertopic, R::supertopic, 3);
  add(R::supertopic, R::subtopic, 1);
  add(R::subtopic, R::subtopic, 2);
  add(R::subtopic, R::other, 1);
  add(R::same_as, R::same_as, 2);
  add(R::same_as, R::supertopic, 1);
  add(R::other, R::other, 2);
  return f;
}

/// Aggregate features with arbitrary noise; the one-hot block equals the label.
inline std::vector<ontogen::LabeledExample> onehot_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> occ(1, 500);
  std::vector<ontogen::LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = ontogen::class_at(rng() % 4);
    const auto a = occ(rng), b = occ(rng);
    const auto c = rng() % (std::min(a, b) + 1);
    ontogen::AggregateFeatures f{a, b, c, ontogen::compute_subsumption(a, b, c)};
    out.push_back({ontogen::fuse(f, std::optional(label)), label,
                   {"a" + std::to_string(i), "b" + std::to_string(i)}});
  }
  return out;
}

/// Feature-only dataset (no LM block) whose subsumption falls into a
/// class-specific band: supertopic < -0.5, subtopic > 0.5, same-as in
/// [-0.1, 0.1] with a high co-occurrence share, other in [-0.1, 0.1] with a
/// low share.
inline std::vector<ontogen::LabeledExample> band_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ontogen::LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = ontogen::class_at(rng() % 4);
    std::uint64_t a = 0, b = 0, c = 0;
    switch (label) {
      case RelationClass::supertopic: {  // A broad, B narrow, B mostly inside A
        b = 20 + rng() % 80;
        a = b * (4 + rng() % 6);
        c = static_cast<std::uint64_t>(static_cast<double>(b) * (0.8 + 0.2 * u(rng)));
        break;
      }
      case RelationClass::subtopic: {
        a = 20 + rng() % 80;
        b = a * (4 + rng() % 6);
        c = static_cast<std::uint64_t>(static_cast<double>(a) * (0.8 + 0.2 * u(rng)));
        break;
      }
      case RelationClass::same_as: {
        a = 50 + rng() % 100;
        b = a + rng() % 5;
        c = static_cast<std::uint64_t>(static_cast<double>(a) * (0.7 + 0.3 * u(rng)));
        break;
      }
      case RelationClass::other: {
        a = 50 + rng() % 100;
        b = a + rng() % 5;
        c = static_cast<std::uint64_t>(static_cast<double>(a) * 0.1 * u(rng));
        break;
      }
    }
    ontogen::AggregateFeatures f{a, b, c, ontogen::compute_subsumption(a, b, c)};
    out.push_back({ontogen::fuse(f, std::optional<RelationClass>{}), label,
                   {"a" + std::to_string(i), "b" + std::to_string(i)}});
  }
  return out;
}

inline std::string topic_name(std::size_t i) { return "topic " + std::to_string(i); }

/// Random valid ontology: a DAG over n topics (edges only from lower to
/// higher index after a random relabelling) with a few alternative labels.
inline ontogen::Ontology random_ontology(std::size_t n, std::mt19937_64& rng) {
  ontogen::Ontology o;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(topic_name(i) + (rng() % 3 == 0 ? " ü" : ""));
  std::shuffle(names.begin(), names.end(), rng);
  for (const auto& name : names) o.nodes[name].main_label = name;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng() % 10 == 0) o.add_edge(names[i], names[j]);
  std::size_t alt = 0;
  for (const auto& name : names)
    if (rng() % 4 == 0) o.nodes[name].alternative_label.insert("alt " + std::to_string(alt++) + " \"q\"");
  for (const auto& name : names)
    if (!o.nodes[name].supertopic.empty() && rng() % 5 == 0) {
      const auto parent = *o.nodes[name].supertopic.begin();
      o.expert_edges.insert({parent, name});
    }
  return o;
}

/// Random digraph as an edge set over "n<i>" node names, with cycles likely.
inline std::set<ontogen::Edge> random_digraph(std::size_t nodes, std::size_t edges, std::mt19937_64& rng) {
  std::set<ontogen::Edge> out;
  if (nodes < 2) return out;
  edges = std::min(edges, nodes * (nodes - 1));
  while (out.size() < edges) {
    const auto a = rng() % nodes, b = rng() % nodes;
    if (a == b) continue;
    out.insert({"n" + std::to_string(a), "n" + std::to_string(b)});
  }
  return out;
}

}  // namespace fixture
