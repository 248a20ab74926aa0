#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontogen/dataset.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/ontology.hpp"
#include "ontogen/providers.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/text.hpp"

namespace ontogen {

/// Relation per ordered pair; both orderings of every pair are expected.
using ClassifiedPairSet = std::map<OrderedPair, RelationClass>;

// ---------------------------------------------------------------------------
// Consistency check
// ---------------------------------------------------------------------------

/// rel(B, A) must be the inverse of rel(A, B).
constexpr bool compatible(RelationClass ab, RelationClass ba) noexcept { return ba == inverse(ab); }

struct DiscardedPair {
  OrderedPair pair;  // ordered so that pair.first < pair.second
  RelationClass forward;
  RelationClass backward;
};

struct ConsistencyResult {
  ClassifiedPairSet kept;
  std::vector<DiscardedPair> discarded;
};

inline ConsistencyResult consistency_filter(const ClassifiedPairSet& pairs) {
  ConsistencyResult out;
  for (const auto& [key, rel] : pairs) {
    auto inv = pairs.find({key.second, key.first});
    if (inv == pairs.end())
      throw InvariantError("pair " + describe_pair(key.first, key.second) + " has no inverse ordering");
    if (compatible(rel, inv->second)) {
      out.kept.emplace(key, rel);
    } else if (key.first < key.second) {
      out.discarded.push_back({key, rel, inv->second});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Taxonomy generation
// ---------------------------------------------------------------------------

struct ExpansionLimits {
  std::size_t max_depth = 8;     // subtopic levels below the root
  std::size_t max_nodes = 1000;  // global cap on visited topics
};

struct ExpansionResult {
  DraftTaxonomy taxonomy;
  std::vector<std::string> warnings;
};

namespace detail {
struct RelationGraph {
  std::map<std::string, std::set<std::string>> children;  // parent -> subtopics
  std::map<std::string, std::set<std::string>> same;

  explicit RelationGraph(const ClassifiedPairSet& pairs) {
    for (const auto& [key, rel] : pairs) {
      if (key.first == key.second) continue;
      switch (rel) {
        case RelationClass::supertopic:
          children[key.first].insert(key.second);
          break;
        case RelationClass::subtopic:
          children[key.second].insert(key.first);
          break;
        case RelationClass::same_as:
          same[key.first].insert(key.second);
          same[key.second].insert(key.first);
          break;
        case RelationClass::other:
          break;
      }
    }
  }

  const std::set<std::string>& kids(const std::string& n) const {
    static const std::set<std::string> none;
    auto it = children.find(n);
    return it == children.end() ? none : it->second;
  }
  const std::set<std::string>& synonyms(const std::string& n) const {
    static const std::set<std::string> none;
    auto it = same.find(n);
    return it == same.end() ? none : it->second;
  }
};
}  // namespace detail

/// Depth-first expansion from `root` along same-as (no depth cost) and
/// subtopic edges (one level each), neighbours in lexicographic order. The
/// draft holds every kept relation among the visited topics.
inline ExpansionResult expand_taxonomy(const std::string& root, const ClassifiedPairSet& kept, ExpansionLimits limits) {
  const detail::RelationGraph g(kept);
  ExpansionResult out;
  out.taxonomy.root = root;
  if (!g.children.contains(root) && !g.same.contains(root)) {
    bool mentioned = std::any_of(kept.begin(), kept.end(), [&](const auto& kv) {
      return kv.first.first == root || kv.first.second == root;
    });
    if (!mentioned) out.warnings.push_back("root '" + root + "' appears in no kept pair");
  }

  std::set<std::string> visited;
  struct Frame {
    std::string node;
    std::size_t depth;
  };
  std::vector<Frame> stack{{root, 0}};
  while (!stack.empty() && visited.size() < std::max<std::size_t>(1, limits.max_nodes)) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (!visited.insert(f.node).second) continue;
    // Push in reverse so the lexicographically first neighbour is expanded first;
    // same-as neighbours come before subtopics.
    std::vector<Frame> next;
    for (const auto& s : g.synonyms(f.node))
      if (!visited.contains(s)) next.push_back({s, f.depth});
    if (f.depth < limits.max_depth)
      for (const auto& c : g.kids(f.node))
        if (!visited.contains(c)) next.push_back({c, f.depth + 1});
    for (auto it = next.rbegin(); it != next.rend(); ++it) stack.push_back(*it);
  }
  if (std::any_of(stack.begin(), stack.end(), [&](const Frame& f) { return !visited.contains(f.node); }))
    out.warnings.push_back("expansion stopped at max_nodes=" + std::to_string(limits.max_nodes));

  for (const auto& n : visited) {
    auto& node = out.taxonomy.nodes[n];
    for (const auto& c : g.kids(n))
      if (visited.contains(c)) node.subtopic.insert(c);
    for (const auto& s : g.synonyms(n))
      if (visited.contains(s)) node.same_as.insert(s);
  }
  for (const auto& [n, node] : out.taxonomy.nodes)
    for (const auto& c : node.subtopic) out.taxonomy.nodes[c].supertopic.insert(n);
  return out;
}

// ---------------------------------------------------------------------------
// Same-as validation
// ---------------------------------------------------------------------------

inline const std::set<std::string>& default_acronym_stopwords() {
  static const std::set<std::string> words{"of", "for", "and", "the", "in", "on"};
  return words;
}

/// True when `candidate` spells the initials of `topic`'s tokens, computed
/// both with and without stopwords; either variant may match. Requires at
/// least two initials and a single-token candidate.
inline bool acronym_match(std::string_view candidate, std::string_view topic,
                          const std::set<std::string>& stopwords = default_acronym_stopwords()) {
  const auto cand = normalize_text(candidate);
  if (cand.empty() || cand.find(' ') != std::string::npos) return false;
  const auto norm_topic = normalize_text(topic);
  const auto tokens = split_tokens(norm_topic);
  auto initials = [&](bool skip) {
    std::string out;
    std::size_t n = 0;
    for (auto t : tokens) {
      if (skip && stopwords.contains(std::string(t))) continue;
      // first code point of the token (UTF-8 lead byte + continuation bytes)
      std::size_t len = 1;
      while (len < t.size() && (static_cast<unsigned char>(t[len]) & 0xC0) == 0x80) ++len;
      out.append(t.substr(0, len));
      ++n;
    }
    return n >= 2 ? out : std::string();
  };
  for (bool skip : {true, false}) {
    const auto init = initials(skip);
    if (!init.empty() && init == cand) return true;
  }
  return false;
}

enum class SameAsStatus { accepted, flagged_for_review, discarded };

inline std::string_view to_string(SameAsStatus s) noexcept {
  switch (s) {
    case SameAsStatus::accepted:
      return "accepted";
    case SameAsStatus::flagged_for_review:
      return "flagged_for_review";
    case SameAsStatus::discarded:
      return "discarded";
  }
  return "discarded";
}

inline SameAsStatus parse_same_as_status(std::string_view s) {
  if (s == "accepted") return SameAsStatus::accepted;
  if (s == "flagged_for_review") return SameAsStatus::flagged_for_review;
  if (s == "discarded") return SameAsStatus::discarded;
  throw ParseError("unknown same-as status '" + std::string(s) + "'");
}

struct SameAsVerdict {
  OrderedPair pair;  // pair.first < pair.second
  bool acronym_ok = false;
  double similarity = 0.0;
  SameAsStatus status = SameAsStatus::discarded;
  std::optional<std::string> error;  // embedder failure, if any

  bool operator==(const SameAsVerdict&) const = default;
};

inline void to_json(nlohmann::json& j, const SameAsVerdict& v) {
  j = {{"topic_a", v.pair.first},
       {"topic_b", v.pair.second},
       {"acronym_ok", v.acronym_ok},
       {"similarity", v.similarity},
       {"status", to_string(v.status)}};
  if (v.error) j["error"] = *v.error;
}

inline void from_json(const nlohmann::json& j, SameAsVerdict& v) {
  v.pair = {j.at("topic_a").get<std::string>(), j.at("topic_b").get<std::string>()};
  v.acronym_ok = j.at("acronym_ok").get<bool>();
  v.similarity = j.at("similarity").get<double>();
  v.status = parse_same_as_status(j.at("status").get<std::string>());
  if (j.contains("error")) v.error = j.at("error").get<std::string>();
}

struct SameAsConfig {
  double threshold = 0.85;
  bool review_mode = false;
  std::set<std::string> stopwords = default_acronym_stopwords();
};

/// Accepts a pair when either label is an acronym of the other or the
/// embedding cosine reaches the threshold; otherwise routes it to review
/// (review mode) or discards it. Embedder failures are recorded on the
/// verdict and treated as zero similarity.
inline std::vector<SameAsVerdict> validate_same_as(const std::vector<OrderedPair>& pairs, Embedder& embedder,
                                                   const SameAsConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw ConfigError("same-as threshold must be in (0, 1)");
  std::set<OrderedPair> unique;
  for (auto [a, b] : pairs) {
    if (a == b) continue;
    if (b < a) std::swap(a, b);
    unique.emplace(a, b);
  }
  std::map<std::string, std::optional<std::vector<double>>> cache;
  std::map<std::string, std::string> failures;
  auto vec = [&](const std::string& label) -> const std::optional<std::vector<double>>& {
    auto it = cache.find(label);
    if (it != cache.end()) return it->second;
    try {
      return cache[label] = embedder.embed(label);
    } catch (const std::exception& e) {
      failures[label] = e.what();
      return cache[label] = std::nullopt;
    }
  };

  std::vector<SameAsVerdict> out;
  for (const auto& p : unique) {
    SameAsVerdict v;
    v.pair = p;
    v.acronym_ok = acronym_match(p.first, p.second, cfg.stopwords) || acronym_match(p.second, p.first, cfg.stopwords);
    const auto& va = vec(p.first);
    const auto& vb = vec(p.second);
    if (va && vb) {
      try {
        v.similarity = std::clamp(cosine_similarity(*va, *vb), 0.0, 1.0);
      } catch (const std::exception& e) {
        v.error = e.what();
      }
    } else {
      v.error = failures.contains(p.first) ? failures[p.first] : failures[p.second];
    }
    if (v.acronym_ok || v.similarity >= cfg.threshold) v.status = SameAsStatus::accepted;
    else v.status = cfg.review_mode ? SameAsStatus::flagged_for_review : SameAsStatus::discarded;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alternative-label clustering
// ---------------------------------------------------------------------------

using CountLookup = std::function<std::uint64_t(const std::string&)>;

struct LabelCluster {
  std::string main_label;
  std::set<std::string> alternatives;
  bool operator==(const LabelCluster&) const = default;
};

/// Highest count wins; ties go to the lexicographically smallest label.
inline std::string elect_main_label(const std::set<std::string>& members, const CountLookup& occurrences) {
  if (members.empty()) throw InvariantError("cannot elect a main label for an empty cluster");
  const std::string* best = nullptr;
  std::uint64_t best_count = 0;
  for (const auto& m : members) {
    const auto c = occurrences(m);
    if (!best || c > best_count) {
      best = &m;
      best_count = c;
    }
  }
  return *best;
}

/// Connected components of `labels` under the accepted same-as edges.
inline std::vector<LabelCluster> cluster_same_as(const std::set<std::string>& labels,
                                                 const std::vector<OrderedPair>& accepted,
                                                 const CountLookup& occurrences) {
  std::map<std::string, std::string> parent;
  for (const auto& l : labels) parent[l] = l;
  for (const auto& [a, b] : accepted) {
    parent.try_emplace(a, a);
    parent.try_emplace(b, b);
  }
  std::function<std::string(const std::string&)> find = [&](const std::string& x) -> std::string {
    auto& p = parent[x];
    if (p != x) p = find(p);
    return p;
  };
  for (const auto& [a, b] : accepted) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<std::string, std::set<std::string>> groups;
  for (const auto& [l, _] : parent) groups[find(l)].insert(l);
  std::vector<LabelCluster> out;
  for (auto& [_, members] : groups) {
    LabelCluster c{elect_main_label(members, occurrences), {}};
    for (const auto& m : members)
      if (m != c.main_label) c.alternatives.insert(m);
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.main_label < b.main_label; });
  return out;
}

// ---------------------------------------------------------------------------
// Cycle breaking
// ---------------------------------------------------------------------------

struct RemovedEdge {
  Edge edge;
  std::uint64_t cooccurrence = 0;
  std::vector<std::string> cycle;  // closed path that contained the edge
};

struct CycleBreakResult {
  std::set<Edge> edges;
  std::vector<RemovedEdge> removed;
};

/// Removes edges until the digraph is acyclic. Depth-first search starts
/// from nodes in lexicographic order and scans successors in lexicographic
/// order; each detected cycle loses its lowest-co-occurrence edge (ties: the
/// lexicographically largest (source, target)). Edges in `protected_edges`
/// are never chosen.
inline CycleBreakResult break_cycles(const std::set<Edge>& edges, const std::function<std::uint64_t(const Edge&)>& weight,
                                     const std::set<Edge>& protected_edges = {}) {
  std::vector<std::string> names;
  for (const auto& [p, c] : edges) {
    names.push_back(p);
    names.push_back(c);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  auto id = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(names.begin(), names.end(), s) - names.begin());
  };
  const std::size_t n = names.size();

  struct Arc {
    std::size_t to;
    bool alive;
    std::uint64_t w;
    bool locked;
  };
  std::vector<std::vector<Arc>> out(n);
  for (const auto& e : edges)  // std::set order => successors sorted by name
    out[id(e.first)].push_back({id(e.second), true, weight(e), protected_edges.contains(e)});

  CycleBreakResult result;
  enum : std::uint8_t { white, gray, black };
  std::vector<std::uint8_t> color(n, white);
  struct Frame {
    std::size_t node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  std::vector<std::size_t> depth_of(n, 0);

  for (std::size_t s = 0; s < n; ++s) {
    if (color[s] != white) continue;
    color[s] = gray;
    depth_of[s] = 0;
    stack.push_back({s, 0});
    while (!stack.empty()) {
      auto& f = stack.back();
      auto& arcs = out[f.node];
      if (f.next == arcs.size()) {
        color[f.node] = black;
        stack.pop_back();
        continue;
      }
      const std::size_t arc_idx = f.next++;
      Arc& arc = arcs[arc_idx];
      if (!arc.alive) continue;
      if (color[arc.to] == white) {
        color[arc.to] = gray;
        depth_of[arc.to] = stack.size();
        stack.push_back({arc.to, 0});
        continue;
      }
      if (color[arc.to] == black) continue;

      // Back edge: cycle is stack[start..top] plus the arc back to stack[start].
      const std::size_t start = depth_of[arc.to];
      struct Candidate {
        std::size_t level;  // index into stack of the edge source; top for the back edge
        Arc* arc;
      };
      std::vector<Candidate> cycle_arcs;
      for (std::size_t lvl = start; lvl + 1 < stack.size(); ++lvl) {
        auto& src = out[stack[lvl].node];
        // the tree arc just consumed from this frame
        cycle_arcs.push_back({lvl, &src[stack[lvl].next - 1]});
      }
      cycle_arcs.push_back({stack.size() - 1, &arc});

      const Candidate* pick = nullptr;
      for (const auto& c : cycle_arcs) {
        if (c.arc->locked) continue;
        if (!pick) {
          pick = &c;
          continue;
        }
        const Edge ce{names[stack[c.level].node], names[c.arc->to]};
        const Edge pe{names[stack[pick->level].node], names[pick->arc->to]};
        if (c.arc->w < pick->arc->w || (c.arc->w == pick->arc->w && ce > pe)) pick = &c;
      }
      std::vector<std::string> witness;
      for (std::size_t lvl = start; lvl < stack.size(); ++lvl) witness.push_back(names[stack[lvl].node]);
      witness.push_back(names[arc.to]);
      if (!pick) throw InvariantError("cycle made only of protected edges: " + witness.front());

      pick->arc->alive = false;
      result.removed.push_back({{names[stack[pick->level].node], names[pick->arc->to]}, pick->arc->w, std::move(witness)});
      // Unwind frames above the removed edge's source; they become unvisited.
      const std::size_t keep = pick->level + 1;
      while (stack.size() > keep) {
        color[stack.back().node] = white;
        stack.pop_back();
      }
    }
  }
  for (const auto& e : edges) {
    const auto& arcs = out[id(e.first)];
    auto it = std::find_if(arcs.begin(), arcs.end(), [&](const Arc& a) { return a.to == id(e.second); });
    if (it->alive) result.edges.insert(e);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

struct BuildConfig {
  ExpansionLimits limits;
  SameAsConfig same_as;
};

struct BuildResult {
  ConsistencyResult consistency;
  DraftTaxonomy draft;
  std::vector<SameAsVerdict> verdicts;
  std::vector<LabelCluster> clusters;
  std::vector<Edge> merged_edges;  // draft edges re-targeted (or dropped as self-loops) by clustering
  CycleBreakResult cycles;
  Ontology ontology;
  std::vector<std::string> warnings;

  std::vector<SameAsVerdict> review_queue() const {
    std::vector<SameAsVerdict> q;
    for (const auto& v : verdicts)
      if (v.status == SameAsStatus::flagged_for_review) q.push_back(v);
    return q;
  }
};

/// Re-targets every hierarchy edge of `draft` onto cluster main labels,
/// dropping edges that collapse into self-loops.
inline Ontology assemble_ontology(const DraftTaxonomy& draft, const std::vector<LabelCluster>& clusters,
                                  std::vector<Edge>* merged = nullptr) {
  std::map<std::string, std::string> main_of;
  Ontology o;
  for (const auto& c : clusters) {
    o.nodes[c.main_label] = {c.main_label, {}, {}, c.alternatives};
    main_of[c.main_label] = c.main_label;
    for (const auto& a : c.alternatives) main_of[a] = c.main_label;
  }
  for (const auto& [label, node] : draft.nodes) {
    if (!main_of.contains(label)) {
      o.nodes[label] = {label, {}, {}, {}};
      main_of[label] = label;
    }
  }
  for (const auto& [label, node] : draft.nodes)
    for (const auto& child : node.subtopic) {
      const auto& p = main_of.at(label);
      const auto& c = main_of.at(child);
      if (merged && (p != label || c != child)) merged->push_back({label, child});
      if (p != c) o.add_edge(p, c);
    }
  return o;
}

/// consistency filter -> expansion -> same-as validation -> clustering ->
/// cycle breaking. `occurrences` elects main labels; `cooccurrence` weighs
/// hierarchy edges for cycle breaking (absent counts are 0).
inline BuildResult build_ontology(const std::string& root, const ClassifiedPairSet& pairs, const BuildConfig& cfg,
                                  Embedder& embedder, const CountLookup& occurrences,
                                  const std::function<std::uint64_t(const Edge&)>& cooccurrence) {
  BuildResult r;
  r.consistency = consistency_filter(pairs);
  auto expansion = expand_taxonomy(root, r.consistency.kept, cfg.limits);
  r.draft = std::move(expansion.taxonomy);
  r.warnings = std::move(expansion.warnings);

  std::vector<OrderedPair> same_pairs;
  std::set<std::string> labels;
  for (const auto& [label, node] : r.draft.nodes) {
    labels.insert(label);
    for (const auto& s : node.same_as)
      if (label < s) same_pairs.emplace_back(label, s);
  }
  r.verdicts = validate_same_as(same_pairs, embedder, cfg.same_as);
  std::vector<OrderedPair> accepted;
  for (const auto& v : r.verdicts)
    if (v.status == SameAsStatus::accepted) accepted.push_back(v.pair);
  r.clusters = cluster_same_as(labels, accepted, occurrences);

  Ontology merged = assemble_ontology(r.draft, r.clusters, &r.merged_edges);
  r.cycles = break_cycles(merged.edges(), cooccurrence);
  for (const auto& rem : r.cycles.removed) merged.remove_edge(rem.edge.first, rem.edge.second);
  r.ontology = std::move(merged);
  return r;
}

}  // namespace ontogen
