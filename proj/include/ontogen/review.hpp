#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontogen/builder.hpp"
#include "ontogen/digest.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/ontology.hpp"

namespace ontogen {

// ---------------------------------------------------------------------------
// Review state
// ---------------------------------------------------------------------------

/// Everything the expert session operates on: the ontology (with expert
/// edge provenance), pending same-as review items, the occurrence counts
/// used for main-label election, and a read-only build audit.
struct ReviewState {
  Ontology ontology;
  std::vector<SameAsVerdict> queue;
  std::map<std::string, std::uint64_t> label_df;
  nlohmann::json audit = nlohmann::json::object();

  bool operator==(const ReviewState&) const = default;
};

inline nlohmann::json state_to_json(const ReviewState& s) {
  nlohmann::json expert = nlohmann::json::array();
  for (const auto& [p, c] : s.ontology.expert_edges) expert.push_back({p, c});
  return {{"ontology", nlohmann::json::parse(serialize_ontology(s.ontology))},
          {"expert_edges", expert},
          {"queue", s.queue},
          {"label_df", s.label_df},
          {"audit", s.audit}};
}

/// Canonical single-line form; object keys sort, so equal states give equal bytes.
inline std::string serialize_state(const ReviewState& s) { return state_to_json(s).dump(); }

inline ReviewState parse_state(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("review state must be a JSON object");
  try {
    std::set<Edge> expert;
    for (const auto& e : j.at("expert_edges")) expert.emplace(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    ReviewState s;
    s.ontology = parse_ontology(j.at("ontology").dump(), std::move(expert));
    s.queue = j.at("queue").get<std::vector<SameAsVerdict>>();
    s.label_df = j.at("label_df").get<std::map<std::string, std::uint64_t>>();
    s.audit = j.value("audit", nlohmann::json::object());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed review state: ") + e.what());
  }
}

inline std::string state_digest(const ReviewState& s) { return sha256_hex(serialize_state(s)); }

inline void save_state(const std::filesystem::path& path, const ReviewState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_state(s) << '\n';
}

inline ReviewState load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_state(buf.str());
}

// ---------------------------------------------------------------------------
// Expert edits
// ---------------------------------------------------------------------------

enum class EditKind { add_relation, remove_relation, discard_topic, discard_alt_label, resolve_same_as };

inline std::string_view to_string(EditKind k) noexcept {
  switch (k) {
    case EditKind::add_relation:
      return "add_relation";
    case EditKind::remove_relation:
      return "remove_relation";
    case EditKind::discard_topic:
      return "discard_topic";
    case EditKind::discard_alt_label:
      return "discard_alt_label";
    case EditKind::resolve_same_as:
      return "resolve_same_as";
  }
  return "add_relation";
}

inline EditKind parse_edit_kind(std::string_view s) {
  for (auto k : {EditKind::add_relation, EditKind::remove_relation, EditKind::discard_topic,
                 EditKind::discard_alt_label, EditKind::resolve_same_as})
    if (to_string(k) == s) return k;
  throw ParseError("unknown edit kind '" + std::string(s) + "'");
}

/// Payloads by kind:
///   add_relation, remove_relation: {"parent", "child"}
///   discard_topic:                 {"topic"}
///   discard_alt_label:             {"topic", "label"}
///   resolve_same_as:               {"topic_a", "topic_b", "decision": "accept" | "reject"}
struct ExpertEdit {
  std::uint64_t edit_id = 0;  // 0 = assigned by the service
  EditKind kind = EditKind::add_relation;
  nlohmann::json payload = nlohmann::json::object();
  std::string timestamp;
  std::string author;

  bool operator==(const ExpertEdit&) const = default;
};

namespace detail {
inline std::vector<const char*> payload_fields(EditKind k) {
  switch (k) {
    case EditKind::add_relation:
    case EditKind::remove_relation:
      return {"parent", "child"};
    case EditKind::discard_topic:
      return {"topic"};
    case EditKind::discard_alt_label:
      return {"topic", "label"};
    case EditKind::resolve_same_as:
      return {"topic_a", "topic_b", "decision"};
  }
  return {};
}
}  // namespace detail

/// Throws ParseError when the payload does not fit its kind.
inline void validate_payload(const ExpertEdit& e) {
  if (!e.payload.is_object()) throw ParseError("edit payload must be an object");
  const auto fields = detail::payload_fields(e.kind);
  for (const char* f : fields) {
    auto it = e.payload.find(f);
    if (it == e.payload.end() || !it->is_string() || it->get<std::string>().empty())
      throw ParseError(std::string(to_string(e.kind)) + " payload needs a non-empty string '" + f + "'");
  }
  if (e.payload.size() != fields.size())
    throw ParseError(std::string(to_string(e.kind)) + " payload has unexpected fields");
  if (e.kind == EditKind::resolve_same_as) {
    const auto d = e.payload["decision"].get<std::string>();
    if (d != "accept" && d != "reject") throw ParseError("decision must be 'accept' or 'reject'");
  }
}

inline void to_json(nlohmann::json& j, const ExpertEdit& e) {
  j = {{"edit_id", e.edit_id},
       {"kind", to_string(e.kind)},
       {"payload", e.payload},
       {"timestamp", e.timestamp},
       {"author", e.author}};
}

inline void from_json(const nlohmann::json& j, ExpertEdit& e) {
  if (!j.is_object()) throw ParseError("edit must be a JSON object");
  try {
    e.edit_id = j.value("edit_id", std::uint64_t{0});
    e.kind = parse_edit_kind(j.at("kind").get<std::string>());
    e.payload = j.at("payload");
    e.timestamp = j.value("timestamp", std::string());
    e.author = j.value("author", std::string());
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed edit: ") + ex.what());
  }
  validate_payload(e);
}

struct EditResult {
  bool applied = false;
  std::uint64_t edit_id = 0;
  std::string reason;              // set when rejected
  std::vector<std::string> cycle;  // closed path, for cycle rejections
};

inline void to_json(nlohmann::json& j, const EditResult& r) {
  j = {{"status", r.applied ? "applied" : "rejected"}, {"edit_id", r.edit_id}};
  if (!r.applied) j["reason"] = r.reason;
  if (!r.cycle.empty()) j["cycle"] = r.cycle;
}

namespace detail {

inline EditResult rejected(const ExpertEdit& e, std::string reason, std::vector<std::string> cycle = {}) {
  return {false, e.edit_id, std::move(reason), std::move(cycle)};
}

/// Path child ->...-> parent, if one exists, as a closed cycle once the
/// proposed edge parent -> child is added.
inline std::optional<std::vector<std::string>> path_closing(const Ontology& o, const std::string& parent,
                                                            const std::string& child) {
  std::map<std::string, std::string> prev;
  std::vector<std::string> frontier{child};
  prev[child] = child;
  while (!frontier.empty()) {
    std::vector<std::string> next;
    for (const auto& n : frontier) {
      if (n == parent) {
        std::vector<std::string> path{n};
        for (auto cur = n; cur != child;) path.push_back(cur = prev.at(cur));
        std::reverse(path.begin(), path.end());  // child ... parent
        path.insert(path.begin(), parent);
        return path;
      }
      for (const auto& c : o.nodes.at(n).subtopic)
        if (prev.emplace(c, n).second) next.push_back(c);
    }
    frontier = std::move(next);
  }
  return std::nullopt;
}

inline bool mentions(const SameAsVerdict& v, const std::set<std::string>& labels) {
  return labels.contains(v.pair.first) || labels.contains(v.pair.second);
}

}  // namespace detail

struct EditOutcome {
  EditResult result;
  std::optional<ReviewState> state;  // set when applied
};

/// Validates `e` against `s` and, when valid, returns the post-edit state.
/// Rejections never alter anything. Endpoints are main labels; review items
/// may name any label of a node.
inline EditOutcome apply_edit(const ReviewState& s, const ExpertEdit& e) {
  validate_payload(e);
  const auto& o = s.ontology;
  auto field = [&](const char* k) { return e.payload.at(k).get<std::string>(); };
  ReviewState next = s;
  auto& no = next.ontology;

  switch (e.kind) {
    case EditKind::add_relation: {
      const auto parent = field("parent"), child = field("child");
      if (!o.nodes.contains(parent) || !o.nodes.contains(child)) return {detail::rejected(e, "unknown topic"), {}};
      if (parent == child) return {detail::rejected(e, "would create cycle", {parent, parent}), {}};
      if (o.has_edge(parent, child)) return {detail::rejected(e, "relation already exists"), {}};
      if (auto cycle = detail::path_closing(o, parent, child))
        return {detail::rejected(e, "would create cycle", *cycle), {}};
      no.add_edge(parent, child);
      no.expert_edges.insert({parent, child});
      break;
    }
    case EditKind::remove_relation: {
      const auto parent = field("parent"), child = field("child");
      if (!o.nodes.contains(parent) || !o.nodes.contains(child)) return {detail::rejected(e, "unknown topic"), {}};
      if (!o.has_edge(parent, child)) return {detail::rejected(e, "no such relation"), {}};
      no.remove_edge(parent, child);
      break;
    }
    case EditKind::discard_topic: {
      const auto topic = field("topic");
      auto it = o.nodes.find(topic);
      if (it == o.nodes.end()) return {detail::rejected(e, "unknown topic"), {}};
      std::set<std::string> labels = it->second.alternative_label;
      labels.insert(topic);
      for (const auto& p : it->second.supertopic) no.remove_edge(p, topic);
      for (const auto& c : it->second.subtopic) no.remove_edge(topic, c);
      no.nodes.erase(topic);
      std::erase_if(next.queue, [&](const SameAsVerdict& v) { return detail::mentions(v, labels); });
      break;
    }
    case EditKind::discard_alt_label: {
      const auto topic = field("topic"), label = field("label");
      auto it = o.nodes.find(topic);
      if (it == o.nodes.end()) return {detail::rejected(e, "unknown topic"), {}};
      if (!it->second.alternative_label.contains(label))
        return {detail::rejected(e, "unknown alternative label"), {}};
      no.nodes.at(topic).alternative_label.erase(label);
      std::erase_if(next.queue, [&](const SameAsVerdict& v) { return detail::mentions(v, {label}); });
      break;
    }
    case EditKind::resolve_same_as: {
      auto a = field("topic_a"), b = field("topic_b");
      if (b < a) std::swap(a, b);
      auto item = std::find_if(s.queue.begin(), s.queue.end(),
                               [&](const SameAsVerdict& v) { return v.pair == OrderedPair{a, b}; });
      if (item == s.queue.end()) return {detail::rejected(e, "no such review item"), {}};
      std::erase_if(next.queue, [&](const SameAsVerdict& v) { return v.pair == OrderedPair{a, b}; });
      if (field("decision") == "reject") break;

      const auto oa = o.owner_of(a), ob = o.owner_of(b);
      if (!oa || !ob) return {detail::rejected(e, "unknown topic"), {}};
      if (*oa == *ob) break;
      // Merge the two clusters and re-elect the main label for that component only.
      const auto& na = o.nodes.at(*oa);
      const auto& nb = o.nodes.at(*ob);
      std::set<std::string> members = na.alternative_label;
      members.insert(nb.alternative_label.begin(), nb.alternative_label.end());
      members.insert(*oa);
      members.insert(*ob);
      const auto main = elect_main_label(members, [&](const std::string& l) {
        auto it = s.label_df.find(l);
        return it == s.label_df.end() ? std::uint64_t{0} : it->second;
      });
      auto retarget = [&](const std::string& x) { return x == *oa || x == *ob ? main : x; };
      Ontology merged;
      for (const auto& [label, node] : o.nodes) {
        if (label == *oa || label == *ob) continue;
        merged.nodes[label] = {label, {}, {}, node.alternative_label};
      }
      merged.nodes[main] = {main, {}, {}, {}};
      for (const auto& m : members)
        if (m != main) merged.nodes[main].alternative_label.insert(m);
      for (const auto& [p, c] : o.edges()) {
        const auto rp = retarget(p), rc = retarget(c);
        if (rp != rc) merged.add_edge(rp, rc);
      }
      for (const auto& [p, c] : o.expert_edges) {
        const auto rp = retarget(p), rc = retarget(c);
        if (rp != rc) merged.expert_edges.insert({rp, rc});
      }
      if (auto cycle = find_cycle(merged.edges())) return {detail::rejected(e, "would create cycle", *cycle), {}};
      no = std::move(merged);
      break;
    }
  }
  if (auto problems = validate_ontology(no); !problems.empty())
    throw InvariantError("edit " + std::to_string(e.edit_id) + " broke an invariant: " + problems.front());
  return {{true, e.edit_id, {}, {}}, std::move(next)};
}

// ---------------------------------------------------------------------------
// Edit log: JSON lines, a header with the base digest followed by one
// applied edit per line.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEditLogFormat = "ontogen-edit-log";

struct EditLog {
  std::string base_ontology_digest;
  std::vector<ExpertEdit> edits;
};

inline std::string log_header_line(std::string_view base_digest) {
  return nlohmann::json{{"format", kEditLogFormat}, {"version", 1}, {"base_ontology_digest", base_digest}}.dump();
}

struct LoadedLog {
  EditLog log;
  std::uintmax_t valid_bytes = 0;  // prefix made of complete, well-formed lines
  bool torn_tail = false;
};

/// Reads a log. A malformed or unterminated final line is a write torn by
/// a crash: it is ignored and reported. Malformed lines elsewhere are errors.
inline LoadedLog read_edit_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open edit log " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  LoadedLog out;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    ++lineno;
    const auto nl = text.find('\n', pos);
    const bool last = nl == std::string::npos || nl + 1 == text.size();
    const auto line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    auto j = nlohmann::json::parse(line, nullptr, false);
    const bool terminated = nl != std::string::npos;
    try {
      if (!terminated || j.is_discarded()) throw ParseError("malformed edit log line", lineno);
      if (lineno == 1) {
        if (j.value("format", std::string()) != kEditLogFormat) throw ParseError("not an edit log", lineno);
        out.log.base_ontology_digest = j.at("base_ontology_digest").get<std::string>();
      } else {
        auto e = j.get<ExpertEdit>();
        if (!out.log.edits.empty() && e.edit_id <= out.log.edits.back().edit_id)
          throw ParseError("edit ids not strictly increasing", lineno);
        out.log.edits.push_back(std::move(e));
      }
    } catch (const Error&) {
      if (!last || lineno == 1) throw;
      out.torn_tail = true;
      break;
    } catch (const nlohmann::json::exception& ex) {
      if (!last || lineno == 1) throw ParseError(std::string("malformed edit log line: ") + ex.what(), lineno);
      out.torn_tail = true;
      break;
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  if (lineno == 0) throw ParseError("edit log has no header");
  return out;
}

/// Re-applies `log` to `base`. Refused when the base digest differs; an edit
/// that is now rejected aborts with its edit_id.
inline ReviewState replay(const EditLog& log, const ReviewState& base) {
  if (state_digest(base) != log.base_ontology_digest)
    throw DigestMismatchError("replay refused: base digest does not match the edit log");
  ReviewState s = base;
  for (const auto& e : log.edits) {
    auto out = apply_edit(s, e);
    if (!out.result.applied)
      throw ReplayError("replay aborted at edit " + std::to_string(e.edit_id) + ": " + out.result.reason, e.edit_id);
    s = std::move(*out.state);
  }
  return s;
}

namespace detail {

/// Append-only file with write-through; each append is durable before it returns.
class AppendFile {
 public:
  AppendFile() = default;
  explicit AppendFile(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;
  AppendFile(AppendFile&& o) noexcept : path_(std::move(o.path_)), fd_(std::exchange(o.fd_, -1)) {}
  AppendFile& operator=(AppendFile&& o) noexcept {
    std::swap(path_, o.path_);
    std::swap(fd_, o.fd_);
    return *this;
  }
  ~AppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append_line(const std::string& line) {
    const std::string data = line + '\n';
    std::size_t done = 0;
    while (done < data.size()) {
      const auto n = ::write(fd_, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("append to " + path_.string() + " failed: " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw IoError("fsync of " + path_.string() + " failed: " + std::strerror(errno));
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Service: immutable snapshots for readers, one writer applying edits in
// arrival order, log append before acknowledgement.
// ---------------------------------------------------------------------------

struct ReviewSnapshot {
  ReviewState state;
  std::string ontology_text;  // serialize_ontology(state.ontology)
  std::uint64_t last_edit_id = 0;
  std::size_t edit_count = 0;
};

struct ReviewViews {
  std::string ontology;         // ontology file format
  nlohmann::json queue;         // flagged same-as verdicts with their evidence
  nlohmann::json audit;         // provenance, build audit, log position
};

class ReviewService {
 public:
  /// Loads `base`, then replays an existing log at `log_path` or starts a new
  /// one. A torn final log line is truncated away.
  void load(ReviewState base, const std::filesystem::path& log_path) {
    std::scoped_lock writer(write_mu_);
    const auto digest = state_digest(base);
    EditLog log{digest, {}};
    ReviewState current = base;
    if (std::filesystem::exists(log_path) && std::filesystem::file_size(log_path) > 0) {
      auto loaded = read_edit_log(log_path);
      if (loaded.log.base_ontology_digest != digest)
        throw DigestMismatchError("edit log " + log_path.string() + " was recorded against a different base");
      current = replay(loaded.log, base);
      if (loaded.torn_tail) std::filesystem::resize_file(log_path, loaded.valid_bytes);
      log = std::move(loaded.log);
      file_ = detail::AppendFile(log_path);
    } else {
      if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
      file_ = detail::AppendFile(log_path);
      file_.append_line(log_header_line(digest));
    }
    base_ = std::move(base);
    log_ = std::move(log);
    publish(std::move(current));
  }

  bool ready() const {
    std::scoped_lock lock(snap_mu_);
    return snapshot_ != nullptr;
  }

  std::shared_ptr<const ReviewSnapshot> snapshot() const {
    std::scoped_lock lock(snap_mu_);
    if (!snapshot_) throw ServiceNotReady("no ontology loaded");
    return snapshot_;
  }

  ReviewViews get_views() const {
    const auto snap = snapshot();
    ReviewViews v;
    v.ontology = snap->ontology_text;
    v.queue = snap->state.queue;
    nlohmann::json expert = nlohmann::json::array();
    for (const auto& [p, c] : snap->state.ontology.expert_edges) expert.push_back({{"parent", p}, {"child", c}});
    v.audit = {{"build", snap->state.audit},
               {"expert_edges", expert},
               {"label_df", snap->state.label_df},
               {"edit_count", snap->edit_count},
               {"last_edit_id", snap->last_edit_id}};
    return v;
  }

  /// Assigns an id when the edit has none; ids must strictly increase.
  EditResult apply(ExpertEdit e) {
    std::scoped_lock writer(write_mu_);
    const auto snap = snapshot();
    if (e.edit_id == 0) e.edit_id = snap->last_edit_id + 1;
    if (e.edit_id <= snap->last_edit_id) return detail::rejected(e, "edit_id must exceed " + std::to_string(snap->last_edit_id));
    auto out = apply_edit(snap->state, e);
    if (!out.result.applied) return out.result;
    file_.append_line(nlohmann::json(e).dump());
    log_.edits.push_back(e);
    publish(std::move(*out.state));
    return out.result;
  }

  EditLog edit_log() const {
    std::scoped_lock writer(write_mu_);
    if (!ready()) throw ServiceNotReady("no ontology loaded");
    return log_;
  }

  const ReviewState& base() const { return base_; }

 private:
  void publish(ReviewState s) {
    auto snap = std::make_shared<ReviewSnapshot>();
    snap->ontology_text = serialize_ontology(s.ontology);
    snap->state = std::move(s);
    snap->edit_count = log_.edits.size();
    snap->last_edit_id = log_.edits.empty() ? 0 : log_.edits.back().edit_id;
    std::scoped_lock lock(snap_mu_);
    snapshot_ = std::move(snap);
  }

  mutable std::mutex write_mu_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const ReviewSnapshot> snapshot_;
  ReviewState base_;
  EditLog log_;
  detail::AppendFile file_;
};

/// Review state seeded from a build: flagged same-as verdicts form the queue.
inline ReviewState make_review_state(const BuildResult& build, std::map<std::string, std::uint64_t> label_df,
                                     nlohmann::json audit = nlohmann::json::object()) {
  ReviewState s;
  s.ontology = build.ontology;
  s.queue = build.review_queue();
  s.label_df = std::move(label_df);
  s.audit = std::move(audit);
  return s;
}

}  // namespace ontogen
