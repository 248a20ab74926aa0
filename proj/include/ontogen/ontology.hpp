#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ontogen/digest.hpp"
#include "ontogen/errors.hpp"

namespace ontogen {

using Edge = std::pair<std::string, std::string>;  // (parent, child)

struct DraftNode {
  std::set<std::string> supertopic;
  std::set<std::string> subtopic;
  std::set<std::string> same_as;
  bool operator==(const DraftNode&) const = default;
};

/// First-approximation taxonomy reached from a root.
struct DraftTaxonomy {
  std::string root;
  std::map<std::string, DraftNode> nodes;
  bool operator==(const DraftTaxonomy&) const = default;
};

struct OntologyNode {
  std::string main_label;
  std::set<std::string> supertopic;
  std::set<std::string> subtopic;
  std::set<std::string> alternative_label;
  bool operator==(const OntologyNode&) const = default;
};

enum class EdgeSource : std::uint8_t { classifier, expert };

/// Nodes keyed by main label. Edge provenance defaults to classifier; edges
/// listed in `expert_edges` were added by an expert and are never removed
/// automatically.
struct Ontology {
  std::map<std::string, OntologyNode> nodes;
  std::set<Edge> expert_edges;

  EdgeSource provenance(const Edge& e) const {
    return expert_edges.contains(e) ? EdgeSource::expert : EdgeSource::classifier;
  }
  bool has_edge(const std::string& parent, const std::string& child) const {
    auto it = nodes.find(parent);
    return it != nodes.end() && it->second.subtopic.contains(child);
  }
  std::set<Edge> edges() const {
    std::set<Edge> out;
    for (const auto& [label, node] : nodes)
      for (const auto& child : node.subtopic) out.emplace(label, child);
    return out;
  }
  void add_edge(const std::string& parent, const std::string& child) {
    nodes.at(parent).subtopic.insert(child);
    nodes.at(child).supertopic.insert(parent);
  }
  void remove_edge(const std::string& parent, const std::string& child) {
    nodes.at(parent).subtopic.erase(child);
    nodes.at(child).supertopic.erase(parent);
    expert_edges.erase({parent, child});
  }
  /// Node whose main or alternative label is `label`.
  std::optional<std::string> owner_of(const std::string& label) const {
    if (nodes.contains(label)) return label;
    for (const auto& [main, node] : nodes)
      if (node.alternative_label.contains(label)) return main;
    return std::nullopt;
  }

  bool operator==(const Ontology&) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_links(const std::string& self, const std::set<std::string>& list, const std::string& field,
                        const auto& nodes, auto&& back_field, std::vector<std::string>& problems) {
  for (const auto& other : list) {
    if (other == self) {
      problems.push_back("'" + self + "' lists itself as " + field);
      continue;
    }
    auto it = nodes.find(other);
    if (it == nodes.end()) {
      problems.push_back("'" + self + "' lists missing node '" + other + "' as " + field);
      continue;
    }
    if (!back_field(it->second).contains(self))
      problems.push_back("'" + self + "' lists '" + other + "' as " + field + " without the inverse link");
  }
}

}  // namespace detail

/// Directed cycle among `edges` (parent -> child), as a closed node path, if any.
inline std::optional<std::vector<std::string>> find_cycle(const std::set<Edge>& edges) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [p, c] : edges) {
    out[p].push_back(c);
    out.try_emplace(c);
  }
  std::map<std::string, int> color;
  for (const auto& [start, _] : out) {
    if (color[start]) continue;
    std::vector<std::pair<std::string, std::size_t>> stack{{start, 0}};
    color[start] = 1;
    while (!stack.empty()) {
      auto& [node, pos] = stack.back();
      const auto& succ = out[node];
      if (pos == succ.size()) {
        color[node] = 2;
        stack.pop_back();
        continue;
      }
      const std::string next = succ[pos++];
      if (color[next] == 1) {
        std::vector<std::string> cycle;
        auto it = std::find_if(stack.begin(), stack.end(), [&](auto& f) { return f.first == next; });
        for (; it != stack.end(); ++it) cycle.push_back(it->first);
        cycle.push_back(next);
        return cycle;
      }
      if (color[next] == 0) {
        color[next] = 1;
        stack.emplace_back(next, 0);
      }
    }
  }
  return std::nullopt;
}

inline std::vector<std::string> validate_draft(const DraftTaxonomy& d) {
  std::vector<std::string> problems;
  for (const auto& [label, node] : d.nodes) {
    detail::check_links(label, node.supertopic, "supertopic", d.nodes, [](const DraftNode& n) -> auto& { return n.subtopic; }, problems);
    detail::check_links(label, node.subtopic, "subtopic", d.nodes, [](const DraftNode& n) -> auto& { return n.supertopic; }, problems);
    detail::check_links(label, node.same_as, "same-as", d.nodes, [](const DraftNode& n) -> auto& { return n.same_as; }, problems);
  }
  if (!d.root.empty() && !d.nodes.contains(d.root)) problems.push_back("root '" + d.root + "' is not a node");
  return problems;
}

/// Full invariant suite: endpoint existence and inverse consistency,
/// acyclicity, main/alternative label uniqueness, expert edges present.
inline std::vector<std::string> validate_ontology(const Ontology& o) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> alt_owner;
  for (const auto& [label, node] : o.nodes) {
    if (node.main_label != label) problems.push_back("node '" + label + "' has main_label '" + node.main_label + "'");
    detail::check_links(label, node.supertopic, "supertopic", o.nodes, [](const OntologyNode& n) -> auto& { return n.subtopic; }, problems);
    detail::check_links(label, node.subtopic, "subtopic", o.nodes, [](const OntologyNode& n) -> auto& { return n.supertopic; }, problems);
    for (const auto& alt : node.alternative_label) {
      if (o.nodes.contains(alt)) problems.push_back("alternative label '" + alt + "' of '" + label + "' is a main label");
      if (auto [it, fresh] = alt_owner.emplace(alt, label); !fresh)
        problems.push_back("alternative label '" + alt + "' shared by '" + it->second + "' and '" + label + "'");
    }
  }
  for (const auto& e : o.expert_edges)
    if (!o.has_edge(e.first, e.second)) problems.push_back("expert edge (" + e.first + ", " + e.second + ") is absent");
  if (auto cycle = find_cycle(o.edges())) {
    std::string path;
    for (const auto& n : *cycle) path += (path.empty() ? "" : " -> ") + n;
    problems.push_back("cycle: " + path);
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Serialization: single-line JSON, nodes sorted by label, keys in fixed
// order, lists sorted.
//   draft:    {"x": {"supertopic": [], "subtopic": [], "same-as": []}}
//   ontology: {"x": {"main_label": "x", "supertopic": [], "subtopic": [], "alternative-label": []}}
// ---------------------------------------------------------------------------

namespace detail {

inline void write_json_string(std::string& out, std::string_view s) {
  out.push_back('"');
  for (unsigned char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\b':
        out += "\\b";
        break;
      case '\f':
        out += "\\f";
        break;
      default:
        if (c < 0x20) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\u00";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xF]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
}

inline void write_list(std::string& out, const std::set<std::string>& items) {
  out.push_back('[');
  bool first = true;
  for (const auto& s : items) {
    if (!first) out += ", ";
    first = false;
    write_json_string(out, s);
  }
  out.push_back(']');
}

inline std::set<std::string> read_list(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " must be a list");
  std::set<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) throw ParseError(what + " entries must be strings");
    if (!out.insert(x.get<std::string>()).second) throw ParseError(what + " has a duplicate entry");
  }
  return out;
}

inline void expect_keys(const nlohmann::json& node, std::initializer_list<const char*> keys, const std::string& label) {
  if (!node.is_object() || node.size() != keys.size()) throw ParseError("node '" + label + "' has unexpected fields");
  for (const char* k : keys)
    if (!node.contains(k)) throw ParseError("node '" + label + "' lacks '" + k + "'");
}

}  // namespace detail

inline std::string serialize_draft(const DraftTaxonomy& d) {
  if (auto problems = validate_draft(d); !problems.empty())
    throw InvariantError("refusing to serialize invalid draft: " + problems.front());
  std::string out = "{";
  bool first = true;
  for (const auto& [label, node] : d.nodes) {
    if (!first) out += ", ";
    first = false;
    detail::write_json_string(out, label);
    out += ": {\"supertopic\": ";
    detail::write_list(out, node.supertopic);
    out += ", \"subtopic\": ";
    detail::write_list(out, node.subtopic);
    out += ", \"same-as\": ";
    detail::write_list(out, node.same_as);
    out += "}";
  }
  out += "}";
  return out;
}

inline DraftTaxonomy parse_draft(std::string_view text, std::string root = {}) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("draft taxonomy must be a JSON object");
  DraftTaxonomy d;
  d.root = std::move(root);
  for (const auto& [label, node] : j.items()) {
    detail::expect_keys(node, {"supertopic", "subtopic", "same-as"}, label);
    d.nodes[label] = {detail::read_list(node["supertopic"], label + ".supertopic"),
                      detail::read_list(node["subtopic"], label + ".subtopic"),
                      detail::read_list(node["same-as"], label + ".same-as")};
  }
  if (auto problems = validate_draft(d); !problems.empty()) throw ParseError("invalid draft: " + problems.front());
  return d;
}

inline std::string serialize_ontology(const Ontology& o) {
  if (auto problems = validate_ontology(o); !problems.empty())
    throw InvariantError("refusing to serialize invalid ontology: " + problems.front());
  std::string out = "{";
  bool first = true;
  for (const auto& [label, node] : o.nodes) {
    if (!first) out += ", ";
    first = false;
    detail::write_json_string(out, label);
    out += ": {\"main_label\": ";
    detail::write_json_string(out, node.main_label);
    out += ", \"supertopic\": ";
    detail::write_list(out, node.supertopic);
    out += ", \"subtopic\": ";
    detail::write_list(out, node.subtopic);
    out += ", \"alternative-label\": ";
    detail::write_list(out, node.alternative_label);
    out += "}";
  }
  out += "}";
  return out;
}

/// Provenance is not part of the ontology format; pass expert edges separately.
inline Ontology parse_ontology(std::string_view text, std::set<Edge> expert_edges = {}) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("ontology must be a JSON object");
  Ontology o;
  for (const auto& [label, node] : j.items()) {
    detail::expect_keys(node, {"main_label", "supertopic", "subtopic", "alternative-label"}, label);
    if (!node["main_label"].is_string()) throw ParseError("node '" + label + "' main_label must be a string");
    o.nodes[label] = {node["main_label"].get<std::string>(), detail::read_list(node["supertopic"], label + ".supertopic"),
                      detail::read_list(node["subtopic"], label + ".subtopic"),
                      detail::read_list(node["alternative-label"], label + ".alternative-label")};
  }
  o.expert_edges = std::move(expert_edges);
  if (auto problems = validate_ontology(o); !problems.empty()) throw ParseError("invalid ontology: " + problems.front());
  return o;
}

/// CSO mapping: superTopicOf per hierarchy edge, relatedEquivalent per
/// main/alternative label pairing; tab-separated, sorted.
inline std::string export_cso_triples(const Ontology& o) {
  std::vector<std::array<std::string, 3>> rows;
  for (const auto& [label, node] : o.nodes) {
    for (const auto& child : node.subtopic) rows.push_back({label, "superTopicOf", child});
    for (const auto& alt : node.alternative_label) rows.push_back({label, "relatedEquivalent", alt});
  }
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& r : rows) out += r[0] + '\t' + r[1] + '\t' + r[2] + '\n';
  return out;
}

}  // namespace ontogen
