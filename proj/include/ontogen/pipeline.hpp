#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontogen/builder.hpp"
#include "ontogen/corpus.hpp"
#include "ontogen/dataset.hpp"
#include "ontogen/digest.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/features.hpp"
#include "ontogen/forest.hpp"
#include "ontogen/metrics.hpp"
#include "ontogen/ontology.hpp"
#include "ontogen/providers.hpp"
#include "ontogen/review.hpp"
#include "ontogen/review_http.hpp"
#include "ontogen/topic_index.hpp"

namespace ontogen {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One JSON file; relative paths resolve against the file's directory.
/// ONTOGEN_LM_ENDPOINT and ONTOGEN_EMBED_ENDPOINT override provider endpoints.
struct PipelineConfig {
  fs::path base_dir = ".";
  fs::path output_dir = "out";

  // index
  std::optional<fs::path> corpus;
  std::optional<fs::path> lexicon;
  std::optional<int> reference_year;
  int window_years = 10;
  bool english_only = true;
  CandidateFilterConfig filter;
  std::size_t threads = 1;

  // split
  std::optional<fs::path> triples;     // labeled pairs to split
  std::optional<fs::path> splits_dir;  // pre-made train/validation/test.tsv, used verbatim
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::optional<std::size_t> stated_total;

  // features
  FeatureMode feature_mode = FeatureMode::aggregate;
  OccurrenceUnit unit = OccurrenceUnit::doc_freq;
  bool unknown_topic_error = false;  // else all-zero features
  std::optional<double> pair_pruning_threshold;
  std::optional<std::string> root;
  std::size_t k = 500;
  std::optional<fs::path> topic_selection;

  // classifier
  ForestHyperparams forest;
  std::optional<std::uint64_t> seed;

  // providers
  std::string lm_kind = "none";  // none | table | remote
  std::optional<fs::path> lm_table;
  MissingPolicy lm_missing = MissingPolicy::feature_only;
  RemoteProviderConfig lm_remote;
  std::size_t lm_max_in_flight = 4;
  std::string embed_kind = "hashing";  // hashing | remote
  std::size_t embed_dim = 256;
  RemoteProviderConfig embed_remote{"http://127.0.0.1:8091", "/embed"};

  // predict / build
  std::string predict_source = "model";  // model | table
  ExpansionLimits limits;
  SameAsConfig same_as;

  // serve
  ServeConfig serve;

  nlohmann::json raw = nlohmann::json::object();

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
  fs::path out(const fs::path& rel) const { return resolve(output_dir) / rel; }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) dst = it->get<T>();
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& dst) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) dst = it->get<T>();
}

inline void read_remote(const nlohmann::json& j, RemoteProviderConfig& r) {
  read_opt(j, "endpoint", r.endpoint);
  read_opt(j, "path", r.path);
  read_opt(j, "timeout_ms", r.timeout_ms);
  read_opt(j, "retries", r.retries);
  read_opt(j, "backoff_base_ms", r.backoff_base_ms);
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return *it;
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j, fs::path base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  c.base_dir = std::move(base_dir);
  c.raw = j;
  try {
    using detail::read_opt;
    using detail::section;
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "corpus", c.corpus);
    read_opt(j, "lexicon", c.lexicon);
    read_opt(j, "reference_year", c.reference_year);
    read_opt(j, "window_years", c.window_years);
    read_opt(j, "english_only", c.english_only);
    read_opt(j, "threads", c.threads);
    read_opt(j, "seed", c.seed);
    read_opt(j, "root", c.root);
    read_opt(j, "k", c.k);
    read_opt(j, "topic_selection", c.topic_selection);
    if (c.window_years <= 0) throw ConfigError("window_years must be positive");

    const auto& f = section(j, "filter");
    read_opt(f, "allowlist", c.filter.allowlist);
    read_opt(f, "denylist", c.filter.denylist);
    read_opt(f, "generic_df_ratio", c.filter.generic_df_ratio);
    read_opt(f, "min_doc_freq", c.filter.min_doc_freq);
    c.filter.validate();

    const auto& d = section(j, "dataset");
    read_opt(d, "triples", c.triples);
    read_opt(d, "splits_dir", c.splits_dir);
    read_opt(d, "fractions", c.fractions);
    read_opt(d, "stated_total", c.stated_total);

    const auto& fe = section(j, "features");
    const auto mode = fe.value("mode", std::string("aggregate"));
    if (mode != "aggregate" && mode != "yearly") throw ConfigError("features.mode must be aggregate or yearly");
    c.feature_mode = mode == "aggregate" ? FeatureMode::aggregate : FeatureMode::yearly;
    const auto unit = fe.value("unit", std::string("doc_freq"));
    if (unit != "doc_freq" && unit != "mentions") throw ConfigError("features.unit must be doc_freq or mentions");
    c.unit = unit == "doc_freq" ? OccurrenceUnit::doc_freq : OccurrenceUnit::mentions;
    const auto unknown = fe.value("unknown_topic", std::string("zero"));
    if (unknown != "zero" && unknown != "error") throw ConfigError("features.unknown_topic must be zero or error");
    c.unknown_topic_error = unknown == "error";
    read_opt(fe, "pair_pruning_threshold", c.pair_pruning_threshold);

    const auto& cl = section(j, "classifier");
    read_opt(cl, "n_trees", c.forest.n_trees);
    read_opt(cl, "max_depth", c.forest.max_depth);
    read_opt(cl, "min_leaf", c.forest.min_leaf);
    read_opt(cl, "features_per_split", c.forest.features_per_split);
    read_opt(cl, "bootstrap", c.forest.bootstrap);
    if (c.forest.n_trees == 0) throw ConfigError("classifier.n_trees must be positive");

    const auto& lm = section(j, "lm_provider");
    read_opt(lm, "kind", c.lm_kind);
    read_opt(lm, "table", c.lm_table);
    read_opt(lm, "max_in_flight", c.lm_max_in_flight);
    const auto missing = lm.value("missing", std::string("feature_only"));
    if (missing != "error" && missing != "feature_only") throw ConfigError("lm_provider.missing must be error or feature_only");
    c.lm_missing = missing == "error" ? MissingPolicy::error : MissingPolicy::feature_only;
    detail::read_remote(lm, c.lm_remote);
    if (c.lm_kind != "none" && c.lm_kind != "table" && c.lm_kind != "remote")
      throw ConfigError("lm_provider.kind must be none, table or remote");
    if (c.lm_kind == "table" && !c.lm_table) throw ConfigError("lm_provider.table is required for kind=table");

    const auto& em = section(j, "embedder");
    read_opt(em, "kind", c.embed_kind);
    read_opt(em, "dim", c.embed_dim);
    detail::read_remote(em, c.embed_remote);
    if (c.embed_kind != "hashing" && c.embed_kind != "remote") throw ConfigError("embedder.kind must be hashing or remote");

    const auto& pr = section(j, "predict");
    read_opt(pr, "source", c.predict_source);
    if (c.predict_source != "model" && c.predict_source != "table")
      throw ConfigError("predict.source must be model or table");
    if (c.predict_source == "table" && !c.lm_table) throw ConfigError("predict.source=table needs lm_provider.table");

    const auto& b = section(j, "build");
    read_opt(b, "max_depth", c.limits.max_depth);
    read_opt(b, "max_nodes", c.limits.max_nodes);
    read_opt(b, "same_as_threshold", c.same_as.threshold);
    read_opt(b, "review_mode", c.same_as.review_mode);
    if (!(c.same_as.threshold > 0 && c.same_as.threshold < 1)) throw ConfigError("build.same_as_threshold must be in (0, 1)");

    const auto& s = section(j, "serve");
    read_opt(s, "bind", c.serve.bind_address);
    read_opt(s, "port", c.serve.port);
    if (auto it = s.find("static_dir"); it != s.end() && !it->is_null()) c.serve.static_dir = c.resolve(it->get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }

  if (const char* lm = std::getenv("ONTOGEN_LM_ENDPOINT"); lm && *lm) c.lm_remote.endpoint = lm;
  if (const char* em = std::getenv("ONTOGEN_EMBED_ENDPOINT"); em && *em) c.embed_remote.endpoint = em;
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return parse_config(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Stages and manifest
// ---------------------------------------------------------------------------

enum class Stage { index, split, features, train, predict, build, export_, eval };

inline std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::index:
      return "index";
    case Stage::split:
      return "split";
    case Stage::features:
      return "features";
    case Stage::train:
      return "train";
    case Stage::predict:
      return "predict";
    case Stage::build:
      return "build";
    case Stage::export_:
      return "export";
    case Stage::eval:
      return "eval";
  }
  return "index";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : {Stage::index, Stage::split, Stage::features, Stage::train, Stage::predict, Stage::build,
                  Stage::export_, Stage::eval})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

/// Output-relative artifact names.
namespace artifact {
inline constexpr const char* stats = "stats.bin";
inline constexpr const char* lexicon = "lexicon.filtered.tsv";
inline constexpr const char* occurrences = "occurrences.tsv";
inline constexpr const char* cooccurrences = "cooccurrences.tsv";
inline constexpr const char* index_report = "index_report.json";
inline constexpr const char* split_train = "split/train.tsv";
inline constexpr const char* split_validation = "split/validation.tsv";
inline constexpr const char* split_test = "split/test.tsv";
inline constexpr const char* split_report = "split_report.json";
inline constexpr const char* features_train = "features.train.tsv";
inline constexpr const char* features_validation = "features.validation.tsv";
inline constexpr const char* features_test = "features.test.tsv";
inline constexpr const char* features_candidates = "features.candidates.tsv";
inline constexpr const char* selected_topics = "selected_topics.tsv";
inline constexpr const char* model = "model.json";
inline constexpr const char* predictions = "predictions.tsv";
inline constexpr const char* draft = "draft.json";
inline constexpr const char* ontology = "ontology.json";
inline constexpr const char* review_state = "review_state.json";
inline constexpr const char* removed_edges = "removed_edges.tsv";
inline constexpr const char* build_audit = "build_audit.json";
inline constexpr const char* cso_triples = "cso_triples.tsv";
inline constexpr const char* eval_report = "eval_report.json";
inline constexpr const char* manifest = "manifest.jsonl";
inline constexpr const char* edit_log = "review/edits.jsonl";
}  // namespace artifact

struct ManifestEntry {
  std::string stage;
  std::string config_digest;
  std::map<std::string, std::string> inputs;   // path -> sha256; output-relative when inside the output dir
  std::map<std::string, std::string> outputs;  // output-relative path -> sha256
  double wall_seconds = 0;
};

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = {{"stage", e.stage},
       {"config_digest", e.config_digest},
       {"inputs", e.inputs},
       {"outputs", e.outputs},
       {"wall_seconds", e.wall_seconds}};
}

inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.stage = j.at("stage").get<std::string>();
  e.config_digest = j.at("config_digest").get<std::string>();
  e.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  e.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  e.wall_seconds = j.value("wall_seconds", 0.0);
}

struct StageReport {
  Stage stage;
  bool no_op = false;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

namespace detail {

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Write to a sibling temp file, then rename over the target.
inline void write_file(const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path());
  const auto tmp = fs::path(p.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline std::vector<std::string> read_label_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(read_file(p));
  for (std::string line; std::getline(in, line);) {
    auto v = trim(strip_cr(line));
    if (v.empty() || v.front() == '#') continue;
    out.push_back(normalize_text(split_tabs(v).front()));
  }
  return out;
}

}  // namespace detail

/// Runs stages against files in the output directory, recording each run in
/// manifest.jsonl. A stage whose config section and input digests match its
/// last manifest entry (and whose outputs are intact) is skipped.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

  const PipelineConfig& config() const noexcept { return cfg_; }

  StageReport run(Stage stage) {
    const auto inputs = inputs_of(stage);
    std::map<std::string, std::string> in_digests;
    for (const auto& [key, path] : inputs) in_digests[key] = check_input(key, path);
    const auto cfg_digest = sha256_hex(config_section(stage).dump());

    const auto manifest = read_manifest();
    if (auto last = last_entry(manifest, to_string(stage));
        last && last->config_digest == cfg_digest && last->inputs == in_digests && outputs_intact(*last)) {
      StageReport r{stage, true, {}, {"unchanged inputs; stage skipped"}};
      for (const auto& [k, _] : last->outputs) r.outputs.push_back(k);
      return r;
    }

    const auto t0 = std::chrono::steady_clock::now();
    StageReport report{stage, false, {}, {}};
    std::map<std::string, std::string> outputs;
    auto emit = [&](const std::string& rel, std::string_view content) {
      detail::write_file(cfg_.out(rel), content);
      outputs[rel] = sha256_hex(content);
      report.outputs.push_back(rel);
    };
    switch (stage) {
      case Stage::index:
        run_index(emit, report);
        break;
      case Stage::split:
        run_split(emit, report);
        break;
      case Stage::features:
        run_features(emit, report);
        break;
      case Stage::train:
        run_train(emit);
        break;
      case Stage::predict:
        run_predict(emit);
        break;
      case Stage::build:
        run_build(emit, report);
        break;
      case Stage::export_:
        emit(artifact::cso_triples, export_cso_triples(parse_ontology(detail::read_file(cfg_.out(artifact::ontology)))));
        break;
      case Stage::eval:
        run_eval(emit);
        break;
    }
    ManifestEntry entry{std::string(to_string(stage)), cfg_digest, in_digests, outputs,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    append_manifest(entry);
    return report;
  }

  /// index -> [split -> features -> train] or features -> predict -> build -> export.
  std::vector<StageReport> run_case_study() {
    if (!cfg_.root) throw ConfigError("case study needs a root topic");
    std::vector<StageReport> out;
    out.push_back(run(Stage::index));
    if (cfg_.predict_source == "model") out.push_back(run(Stage::split));
    out.push_back(run(Stage::features));
    if (cfg_.predict_source == "model") out.push_back(run(Stage::train));
    for (auto s : {Stage::predict, Stage::build, Stage::export_}) out.push_back(run(s));
    return out;
  }

  /// Files under the output directory that no manifest entry produced.
  std::vector<std::string> orphan_files() const {
    std::set<std::string> known{artifact::manifest};
    for (const auto& e : read_manifest())
      for (const auto& [rel, _] : e.outputs) known.insert(rel);
    std::vector<std::string> orphans;
    const auto root = cfg_.out("");
    if (!fs::exists(root)) return orphans;
    for (const auto& f : fs::recursive_directory_iterator(root)) {
      if (!f.is_regular_file()) continue;
      const auto rel = fs::relative(f.path(), root).generic_string();
      if (rel.starts_with("review/")) continue;  // expert session state, owned by serve
      if (!known.contains(rel)) orphans.push_back(rel);
    }
    std::sort(orphans.begin(), orphans.end());
    return orphans;
  }

  std::vector<ManifestEntry> read_manifest() const {
    std::vector<ManifestEntry> out;
    const auto path = cfg_.out(artifact::manifest);
    if (!fs::exists(path)) return out;
    std::istringstream in(detail::read_file(path));
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw ParseError("malformed manifest line", lineno);
      out.push_back(j.get<ManifestEntry>());
    }
    return out;
  }

  std::unique_ptr<Embedder> make_embedder() const {
    if (cfg_.embed_kind == "remote") return std::make_unique<RemoteEmbedder>(cfg_.embed_remote);
    return std::make_unique<HashingEmbedder>(cfg_.embed_dim);
  }

  std::unique_ptr<LmProvider> make_lm_provider() const {
    if (cfg_.lm_kind == "table")
      return std::make_unique<TableLmProvider>(TableLmProvider::load(cfg_.resolve(*cfg_.lm_table), cfg_.lm_missing));
    if (cfg_.lm_kind == "remote") return std::make_unique<RemoteLmProvider>(cfg_.lm_remote);
    return nullptr;
  }

 private:
  using Emit = std::function<void(const std::string&, std::string_view)>;
  // key -> path; keys of artifacts inside the output dir are output-relative
  using InputList = std::vector<std::pair<std::string, fs::path>>;

  static std::optional<ManifestEntry> last_entry(const std::vector<ManifestEntry>& m, std::string_view stage) {
    for (auto it = m.rbegin(); it != m.rend(); ++it)
      if (it->stage == stage) return *it;
    return std::nullopt;
  }

  static std::optional<ManifestEntry> producer_of(const std::vector<ManifestEntry>& m, const std::string& rel) {
    for (auto it = m.rbegin(); it != m.rend(); ++it)
      if (it->outputs.contains(rel)) return *it;
    return std::nullopt;
  }

  bool outputs_intact(const ManifestEntry& e) const {
    for (const auto& [rel, digest] : e.outputs) {
      const auto p = cfg_.out(rel);
      if (!fs::exists(p) || sha256_file(p) != digest) return false;
    }
    return true;
  }

  bool upstream(const std::string& key) const { return !fs::path(key).is_absolute(); }

  /// Digest of one input. Upstream artifacts must exist, match the digest
  /// their producer recorded, and come from a producer whose own inputs are
  /// still current.
  std::string check_input(const std::string& key, const fs::path& path) const {
    if (!upstream(key)) {
      if (!fs::exists(path)) throw ConfigError("input file " + path.string() + " does not exist");
      return sha256_file(path);
    }
    const auto manifest = read_manifest();
    auto producer = producer_of(manifest, key);
    if (!producer || !fs::exists(path))
      throw DependencyError("missing upstream artifact '" + key + "'; run the stage that produces it first");
    const auto digest = sha256_file(path);
    if (producer->outputs.at(key) != digest)
      throw DigestMismatchError("stale artifact '" + key + "': changed since stage '" + producer->stage +
                                "' produced it");
    for (const auto& [in_key, in_digest] : producer->inputs) {
      const auto in_path = upstream(in_key) ? cfg_.out(in_key) : fs::path(in_key);
      if (!fs::exists(in_path) || sha256_file(in_path) != in_digest)
        throw DigestMismatchError("stale artifact '" + key + "': its input '" + in_key + "' changed since stage '" +
                                  producer->stage + "' ran");
    }
    return digest;
  }

  InputList inputs_of(Stage s) const {
    InputList in;
    auto external = [&](const std::optional<fs::path>& p, const char* what) {
      if (!p) throw ConfigError(std::string("config lacks '") + what + "'");
      const auto abs = fs::absolute(cfg_.resolve(*p)).lexically_normal();
      in.emplace_back(abs.string(), abs);
    };
    auto art = [&](const char* rel) { in.emplace_back(rel, cfg_.out(rel)); };
    switch (s) {
      case Stage::index:
        external(cfg_.corpus, "corpus");
        external(cfg_.lexicon, "lexicon");
        break;
      case Stage::split:
        if (cfg_.splits_dir) {
          for (const char* f : {"train.tsv", "validation.tsv", "test.tsv"})
            external(fs::path(*cfg_.splits_dir) / f, "dataset.splits_dir");
        } else {
          external(cfg_.triples, "dataset.triples");
        }
        break;
      case Stage::features:
        art(artifact::stats);
        art(artifact::lexicon);
        if (has_dataset()) {
          art(artifact::split_train);
          art(artifact::split_validation);
          art(artifact::split_test);
        }
        if (cfg_.topic_selection) external(cfg_.topic_selection, "topic_selection");
        if (cfg_.lm_kind == "table") external(cfg_.lm_table, "lm_provider.table");
        break;
      case Stage::train:
        art(artifact::features_train);
        art(artifact::split_train);
        break;
      case Stage::predict:
        art(artifact::features_candidates);
        if (cfg_.predict_source == "model") art(artifact::model);
        else external(cfg_.lm_table, "lm_provider.table");
        break;
      case Stage::build:
        art(artifact::predictions);
        art(artifact::stats);
        art(artifact::lexicon);
        break;
      case Stage::export_:
        art(artifact::ontology);
        break;
      case Stage::eval:
        art(artifact::model);
        art(artifact::features_test);
        art(artifact::split_test);
        break;
    }
    return in;
  }

  bool has_dataset() const { return cfg_.triples || cfg_.splits_dir; }

  nlohmann::json config_section(Stage s) const {
    const auto& r = cfg_.raw;
    auto pick = [&](std::initializer_list<const char*> keys) {
      nlohmann::json out = nlohmann::json::object();
      for (const char* k : keys)
        if (r.contains(k)) out[k] = r[k];
      return out;
    };
    switch (s) {
      case Stage::index:
        return pick({"reference_year", "window_years", "english_only", "filter", "root"});
      case Stage::split: {
        auto j = pick({"dataset"});
        if (cfg_.seed) j["seed"] = *cfg_.seed;
        return j;
      }
      case Stage::features:
        return pick({"features", "root", "k", "lm_provider", "embedder", "dataset"});
      case Stage::train: {
        nlohmann::json j = nlohmann::json::object();
        if (cfg_.seed) j["seed"] = *cfg_.seed;
        j["classifier"] = nlohmann::json::parse(serialize_hyperparams());
        return j;
      }
      case Stage::predict:
        return pick({"predict", "lm_provider"});
      case Stage::build:
        return pick({"root", "build", "embedder"});
      case Stage::export_:
      case Stage::eval:
        return nlohmann::json::object();
    }
    return nlohmann::json::object();
  }

  std::string serialize_hyperparams() const {
    const auto& h = cfg_.forest;
    return nlohmann::json{{"n_trees", h.n_trees},
                          {"max_depth", h.max_depth},
                          {"min_leaf", h.min_leaf},
                          {"features_per_split", h.features_per_split},
                          {"bootstrap", h.bootstrap}}
        .dump();
  }

  void append_manifest(const ManifestEntry& e) const {
    const auto path = cfg_.out(artifact::manifest);
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to " + path.string());
    out << nlohmann::json(e).dump() << '\n';
  }

  std::uint64_t require_seed() const {
    if (!cfg_.seed) throw ConfigError("a seed is required for this stage (config 'seed' or --seed)");
    return *cfg_.seed;
  }

  // --- index ---------------------------------------------------------------

  void run_index(const Emit& emit, StageReport& report) {
    if (!cfg_.reference_year) throw ConfigError("reference_year is required; the indexing window never follows the clock");
    CorpusConfig cc;
    cc.english_only = cfg_.english_only;
    cc.window_years = cfg_.window_years;
    cc.reference_year = cfg_.reference_year;
    const auto corpus = load_corpus(cfg_.resolve(*cfg_.corpus), cc);
    const auto lexicon = load_lexicon(cfg_.resolve(*cfg_.lexicon));
    const auto window = YearWindow::ending_at(cc.effective_reference_year(), cfg_.window_years);
    const auto matcher = build_matcher(lexicon);
    const auto stats = cfg_.threads > 1 ? count_occurrences_parallel(corpus.records, matcher, window, cfg_.threads)
                                        : count_occurrences(corpus.records, matcher, window);

    auto filter = cfg_.filter;
    if (cfg_.root) filter.allowlist.insert(*cfg_.root);  // the root is never filtered away
    const auto kept = filter_candidates(stats, lexicon, filter);

    std::ostringstream bin, lex, occ, pairs;
    write_stats(bin, stats, lexicon.digest());
    write_lexicon(lex, kept);
    write_occurrence_table(occ, stats);
    write_pair_table(pairs, stats);
    nlohmann::json rep{{"corpus", corpus.report},
                       {"window", {window.start_year, window.end_year}},
                       {"lexicon_size", lexicon.size()},
                       {"kept_topics", kept.size()},
                       {"documents_in_window", stats.total_docs()}};
    emit(artifact::stats, bin.str());
    emit(artifact::lexicon, lex.str());
    emit(artifact::occurrences, occ.str());
    emit(artifact::cooccurrences, pairs.str());
    emit(artifact::index_report, rep.dump(2) + "\n");
    report.notes.push_back(std::to_string(corpus.report.kept) + " records kept of " +
                           std::to_string(corpus.report.total_read));
  }

  // --- split ---------------------------------------------------------------

  void run_split(const Emit& emit, StageReport& report) {
    DatasetSplit split;
    std::vector<std::string> warnings;
    if (cfg_.splits_dir) {
      const auto dir = cfg_.resolve(*cfg_.splits_dir);
      for (auto s : kAllSplits) {
        auto f = load_triples(dir / (std::string(to_string(s)) + ".tsv"));
        split.part(s) = std::move(f.triples);
        for (auto& w : f.warnings) warnings.push_back(std::string(to_string(s)) + ": " + w);
      }
    } else {
      auto f = load_triples(cfg_.resolve(*cfg_.triples));
      warnings = std::move(f.warnings);
      split = make_splits(f.triples, cfg_.fractions, require_seed());
    }
    const auto violations = check_split_integrity(split);
    const auto summary = summarize_split(split, cfg_.fractions, cfg_.stated_total);
    nlohmann::json rep{{"sizes", summary.sizes},
                       {"fractions", summary.fractions},
                       {"findings", summary.findings},
                       {"warnings", warnings},
                       {"violations", nlohmann::json::array()}};
    for (const auto& v : violations) rep["violations"].push_back(v.describe());
    for (auto s : kAllSplits) {
      std::ostringstream out;
      write_triples(out, split.part(s));
      emit("split/" + std::string(to_string(s)) + ".tsv", out.str());
    }
    emit(artifact::split_report, rep.dump(2) + "\n");
    for (const auto& f : summary.findings) report.notes.push_back(f);
    if (!violations.empty())
      report.notes.push_back(std::to_string(violations.size()) + " split integrity violations (see split_report.json)");
  }

  // --- features ------------------------------------------------------------

  struct IndexView {
    OccurrenceStats stats;
    TopicLexicon lexicon;  // filtered

    std::optional<std::string> id_of(const std::string& label) const {
      auto i = lexicon.find_label(label);
      if (!i) return std::nullopt;
      const auto& id = lexicon[*i].topic_id;
      return stats.contains(id) ? std::optional(id) : std::nullopt;
    }
    std::uint64_t df(const std::string& label) const {
      auto id = id_of(label);
      return id ? stats.total_doc_freq(*id) : 0;
    }
    std::uint64_t cooc(const std::string& a, const std::string& b) const {
      auto ia = id_of(a), ib = id_of(b);
      return ia && ib ? stats.total_cooccurrence(*ia, *ib) : 0;
    }
  };

  IndexView load_index() const {
    auto file = load_stats(cfg_.out(artifact::stats));
    return {std::move(file.stats), load_lexicon(cfg_.out(artifact::lexicon))};
  }

  NumericFeatures features_for(const IndexView& ix, const std::string& a, const std::string& b) const {
    auto ia = ix.id_of(a), ib = ix.id_of(b);
    if (ia && ib) return compute_features(*ia, *ib, ix.stats, cfg_.feature_mode, cfg_.unit);
    if (cfg_.unknown_topic_error)
      throw LookupError("topic '" + (ia ? b : a) + "' is not an indexed candidate topic");
    if (cfg_.feature_mode == FeatureMode::aggregate) return AggregateFeatures{};
    return YearlyFeatures{std::vector<AggregateFeatures>(ix.stats.years())};
  }

  FeatureSchema schema_for(const IndexView& ix) const {
    return cfg_.feature_mode == FeatureMode::aggregate ? FeatureSchema{} : FeatureSchema{FeatureMode::yearly, ix.stats.years()};
  }

  std::string feature_rows(const IndexView& ix, const std::vector<OrderedPair>& pairs, LmProvider* lm) const {
    std::vector<std::optional<RelationClass>> classes(pairs.size());
    if (lm) classes = get_predictions(*lm, pairs, cfg_.lm_max_in_flight);
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      rows.push_back({pairs[i].first, pairs[i].second, fuse(features_for(ix, pairs[i].first, pairs[i].second), classes[i])});
    std::ostringstream out;
    write_feature_rows(out, schema_for(ix), rows);
    return out.str();
  }

  void run_features(const Emit& emit, StageReport& report) {
    if (!has_dataset() && !cfg_.root) throw ConfigError("features needs a dataset, a root topic, or both");
    const auto ix = load_index();
    auto lm = make_lm_provider();

    if (has_dataset()) {
      const std::pair<SplitName, const char*> parts[] = {{SplitName::train, artifact::features_train},
                                                         {SplitName::validation, artifact::features_validation},
                                                         {SplitName::test, artifact::features_test}};
      for (const auto& [split, out] : parts) {
        const auto triples = load_triples(cfg_.out("split/" + std::string(to_string(split)) + ".tsv")).triples;
        std::vector<OrderedPair> pairs;
        for (const auto& t : triples) pairs.push_back(pair_key(t.topic_a, t.topic_b));
        emit(out, feature_rows(ix, pairs, lm.get()));
      }
    }

    if (cfg_.root) {
      const auto root = normalize_text(*cfg_.root);
      const auto root_id = ix.id_of(root);
      if (!root_id) throw LookupError("root topic '" + *cfg_.root + "' is not in the indexed lexicon");
      std::vector<std::string> topics;
      for (const auto& id : select_related_topics(ix.stats, ix.lexicon, *root_id, cfg_.k))
        topics.push_back(ix.lexicon.label_of(id));
      if (cfg_.topic_selection) {
        // expert pre-filter: keep only listed topics, in selection order
        std::set<std::string> chosen(topics.begin(), topics.end());
        std::vector<std::string> filtered;
        for (const auto& l : detail::read_label_lines(cfg_.resolve(*cfg_.topic_selection))) {
          if (l == root) continue;
          if (!chosen.contains(l))
            throw ConfigError("topic selection lists '" + l + "', which is not among the related topics");
          filtered.push_back(l);
        }
        topics = std::move(filtered);
      }
      std::ostringstream sel;
      sel << "#topic\tdoc_freq\tcooccurrence_with_root\n";
      for (const auto& t : topics) sel << t << '\t' << ix.df(t) << '\t' << ix.cooc(root, t) << '\n';
      emit(artifact::selected_topics, sel.str());

      std::vector<std::string> all{root};
      all.insert(all.end(), topics.begin(), topics.end());
      std::sort(all.begin(), all.end());
      std::unique_ptr<Embedder> embedder;
      std::map<std::string, std::vector<double>> vectors;
      if (cfg_.pair_pruning_threshold) {
        embedder = make_embedder();
        for (const auto& t : all) vectors[t] = embedder->embed(t);
      }
      std::vector<OrderedPair> pairs;
      std::size_t pruned = 0;
      for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) {
          if (cfg_.pair_pruning_threshold &&
              cosine_similarity(vectors[all[i]], vectors[all[j]]) < *cfg_.pair_pruning_threshold) {
            ++pruned;
            continue;
          }
          pairs.emplace_back(all[i], all[j]);
          pairs.emplace_back(all[j], all[i]);
        }
      emit(artifact::features_candidates, feature_rows(ix, pairs, lm.get()));
      report.notes.push_back(std::to_string(topics.size()) + " related topics, " + std::to_string(pairs.size()) +
                             " ordered candidate pairs" + (pruned ? ", " + std::to_string(pruned) + " pairs pruned" : ""));
    }
  }

  // --- train / predict / eval ----------------------------------------------

  std::vector<LabeledExample> labeled(const char* features, const char* split) const {
    std::ifstream fin(cfg_.out(features));
    auto dump = read_feature_rows(fin);
    const auto triples = load_triples(cfg_.out(split)).triples;
    if (dump.rows.size() != triples.size())
      throw SchemaError(std::string(features) + " and " + split + " have different row counts");
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const auto key = pair_key(triples[i].topic_a, triples[i].topic_b);
      if (OrderedPair{dump.rows[i].topic_a, dump.rows[i].topic_b} != key)
        throw SchemaError(std::string(features) + " row " + std::to_string(i + 1) + " does not align with " + split);
      out.push_back({std::move(dump.rows[i].vector), triples[i].relation, key});
    }
    return out;
  }

  void run_train(const Emit& emit) {
    const auto data = labeled(artifact::features_train, artifact::split_train);
    if (data.empty()) throw ConfigError("training split is empty");
    emit(artifact::model, serialize_model(train_forest(data, cfg_.forest, require_seed(), cfg_.threads)) + "\n");
  }

  void run_predict(const Emit& emit) {
    std::ifstream fin(cfg_.out(artifact::features_candidates));
    const auto dump = read_feature_rows(fin);
    std::ostringstream out;
    if (cfg_.predict_source == "model") {
      const auto model = load_model(cfg_.out(artifact::model));
      for (const auto& r : dump.rows)
        out << r.topic_a << '\t' << r.topic_b << '\t' << to_string(predict(model, r.vector).predicted) << '\n';
    } else {
      // External prediction table; pairs it does not list carry no relation.
      const auto table = TableLmProvider::load(cfg_.resolve(*cfg_.lm_table), MissingPolicy::feature_only);
      for (const auto& r : dump.rows) {
        auto it = table.table().find(pair_key(r.topic_a, r.topic_b));
        out << r.topic_a << '\t' << r.topic_b << '\t'
            << to_string(it == table.table().end() ? RelationClass::other : it->second) << '\n';
      }
    }
    emit(artifact::predictions, out.str());
  }

  void run_eval(const Emit& emit) {
    const auto model = load_model(cfg_.out(artifact::model));
    const auto test = labeled(artifact::features_test, artifact::split_test);
    nlohmann::json rep = evaluate(model, test);
    rep["model_schema"] = model.schema.id();
    emit(artifact::eval_report, rep.dump(2) + "\n");
  }

  // --- build ---------------------------------------------------------------

  void run_build(const Emit& emit, StageReport& report) {
    if (!cfg_.root) throw ConfigError("build needs a root topic");
    const auto ix = load_index();
    ClassifiedPairSet pairs;
    for (const auto& t : load_triples(cfg_.out(artifact::predictions)).triples)
      pairs[pair_key(t.topic_a, t.topic_b)] = t.relation;

    BuildConfig bc{cfg_.limits, cfg_.same_as};
    auto embedder = make_embedder();
    const auto result = build_ontology(
        normalize_text(*cfg_.root), pairs, bc, *embedder, [&](const std::string& l) { return ix.df(l); },
        [&](const Edge& e) { return ix.cooc(e.first, e.second); });

    nlohmann::json audit;
    audit["discarded_pairs"] = nlohmann::json::array();
    for (const auto& d : result.consistency.discarded)
      audit["discarded_pairs"].push_back(
          {{"topic_a", d.pair.first}, {"topic_b", d.pair.second}, {"forward", to_string(d.forward)}, {"backward", to_string(d.backward)}});
    audit["same_as_verdicts"] = result.verdicts;
    audit["clusters"] = nlohmann::json::array();
    for (const auto& c : result.clusters)
      if (!c.alternatives.empty()) audit["clusters"].push_back({{"main_label", c.main_label}, {"alternatives", c.alternatives}});
    audit["merged_edges"] = nlohmann::json::array();
    for (const auto& [p, c] : result.merged_edges) audit["merged_edges"].push_back({p, c});
    audit["removed_edges"] = nlohmann::json::array();
    std::ostringstream removed;
    removed << "#source\ttarget\tcoocc\tcycle\n";
    for (const auto& r : result.cycles.removed) {
      std::string path;
      for (const auto& n : r.cycle) path += (path.empty() ? "" : " -> ") + n;
      removed << r.edge.first << '\t' << r.edge.second << '\t' << r.cooccurrence << '\t' << path << '\n';
      audit["removed_edges"].push_back(
          {{"source", r.edge.first}, {"target", r.edge.second}, {"coocc", r.cooccurrence}, {"cycle", r.cycle}});
    }
    audit["warnings"] = result.warnings;

    std::map<std::string, std::uint64_t> label_df;
    for (const auto& [label, _] : result.draft.nodes) label_df[label] = ix.df(label);
    nlohmann::json evidence = nlohmann::json::object();
    for (const auto& [p, c] : result.ontology.edges())
      evidence[p + "\t" + c] = {{"coocc", ix.cooc(p, c)}, {"df_parent", ix.df(p)}, {"df_child", ix.df(c)}};
    nlohmann::json review_audit = audit;
    review_audit["edge_evidence"] = evidence;
    review_audit["root"] = normalize_text(*cfg_.root);

    emit(artifact::draft, serialize_draft(result.draft) + "\n");
    emit(artifact::ontology, serialize_ontology(result.ontology) + "\n");
    emit(artifact::removed_edges, removed.str());
    emit(artifact::build_audit, audit.dump(2) + "\n");
    emit(artifact::review_state, serialize_state(make_review_state(result, label_df, review_audit)) + "\n");
    report.notes.push_back(std::to_string(result.ontology.nodes.size()) + " topics, " +
                           std::to_string(result.ontology.edges().size()) + " relations, " +
                           std::to_string(result.cycles.removed.size()) + " edges removed to break cycles");
  }

  PipelineConfig cfg_;
};

}  // namespace ontogen
