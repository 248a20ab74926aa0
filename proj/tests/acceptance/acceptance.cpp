// Acceptance harness: one PASS/FAIL/SKIP line per criterion. Exit status is
// nonzero when any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "ontogen/ontogen.hpp"
#include "oracles.hpp"

using namespace ontogen;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::fail, std::move(d)}; }

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.verdict == Verdict::pass && budget_s > 0 && secs > budget_s)
    o = fail(o.detail + "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget");
  const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
  if (o.verdict == Verdict::fail) ++failures;
  std::printf("%s  %-34s %7.2fs  %s\n", tag, name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ontogen-accept-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// --- criteria ----------------------------------------------------------------

Outcome subsumption_oracle() {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t a = 1 + rng() % 1000000, b = 1 + rng() % 1000000;
    const std::uint64_t c = rng() % (std::min(a, b) + 1);
    const double s = compute_subsumption(a, b, c);
    if (std::abs(s - oracle::subsumption(double(a), double(b), double(c))) > 1e-12)
      return fail("oracle mismatch at sample " + std::to_string(i));
    if (s != -compute_subsumption(b, a, c)) return fail("antisymmetry broken at sample " + std::to_string(i));
    if (s < -1.0 || s > 1.0) return fail("bound broken at sample " + std::to_string(i));
  }
  return pass("10000 samples within 1e-12, antisymmetric, in [-1, 1]");
}

Outcome indexer_oracle() {
  std::mt19937_64 rng(77);
  const YearWindow window{2015, 2024};
  std::vector<std::string> pool = {"learning", "deep learning", "graph", "neural", "neural networks", "data",
                                   "big data", "query", "sql", "security"};
  for (int i = 0; i < 45; ++i) pool.push_back("term" + std::to_string(i) + (i % 3 ? "" : " x" + std::to_string(i)));
  std::size_t shardings = 0;
  for (int corpus_no = 0; corpus_no < 5; ++corpus_no) {
    std::vector<std::string> labels(pool.begin(), pool.end());
    std::shuffle(labels.begin(), labels.end(), rng);
    labels.resize(20 + rng() % 31);  // <= 50 topics
    std::vector<TopicEntry> entries;
    for (std::size_t t = 0; t < labels.size(); ++t) entries.push_back({"t" + std::to_string(t), labels[t], TopicSource::manual});
    const TopicLexicon lex(entries);
    std::vector<std::string> vocab = oracle::words("we study a new model for x5 results");
    for (const auto& l : labels)
      for (const auto& w : oracle::words(l)) vocab.push_back(w);
    std::vector<PaperRecord> docs;
    const std::size_t n_docs = 50 + rng() % 151;  // <= 200 docs
    for (std::size_t d = 0; d < n_docs; ++d) {
      auto text = [&] {
        std::string t;
        for (int k = 0, n = static_cast<int>(rng() % 25); k < n; ++k) t += vocab[rng() % vocab.size()] + (rng() % 6 ? " " : ". ");
        return t;
      };
      docs.push_back({"p" + std::to_string(d), text(), text(), 2012 + static_cast<int>(rng() % 15), std::nullopt});
    }
    const auto m = build_matcher(lex);
    const auto stats = count_occurrences(docs, m, window);
    auto naive = oracle::naive_count(docs, labels, window.start_year, window.end_year);
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const auto ti = stats.index_of("t" + std::to_string(t));
      for (int y = window.start_year; y <= window.end_year; ++y) {
        const auto off = window.offset(y);
        if (stats.mentions(ti, off) != naive.mentions[{t, y}] || stats.doc_freq(ti, off) != naive.doc_freq[{t, y}])
          return fail("corpus " + std::to_string(corpus_no) + ": counts differ for '" + labels[t] + "'");
        for (std::size_t u = t + 1; u < labels.size(); ++u)
          if (stats.cooccurrence(ti, stats.index_of("t" + std::to_string(u)), off) != naive.cooc[{t, u, y}])
            return fail("corpus " + std::to_string(corpus_no) + ": co-occurrence differs");
      }
    }
    for (int s = 0; s < 2; ++s, ++shardings) {
      std::vector<std::size_t> cuts{0, docs.size()};
      for (int k = 0, n = 1 + static_cast<int>(rng() % 6); k < n; ++k) cuts.push_back(rng() % (docs.size() + 1));
      std::sort(cuts.begin(), cuts.end());
      OccurrenceStats merged(m.topic_ids(), window);
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
        merged.merge(count_occurrences(std::span(docs).subspan(cuts[k], cuts[k + 1] - cuts[k]), m, window));
      if (!(merged == stats)) return fail("sharding " + std::to_string(shardings) + " differs from single pass");
    }
  }
  return pass("5 corpora match the naive oracle; " + std::to_string(shardings) + " shardings equal single pass");
}

Outcome consistency_exhaustive() {
  std::size_t survivors = 0;
  for (auto ab : kAllClasses)
    for (auto ba : kAllClasses) {
      const auto r = consistency_filter({{{"a", "b"}, ab}, {{"b", "a"}, ba}});
      const bool compatible = ba == inverse(ab);
      if (compatible != !r.kept.empty()) return fail(std::string("wrong verdict for ") + std::string(to_string(ab)) + "/" + std::string(to_string(ba)));
      survivors += compatible;
    }
  if (survivors != 4) return fail(std::to_string(survivors) + " combinations survive");
  ClassifiedPairSet s{{{"machine learning", "random forest"}, RelationClass::supertopic},
                      {{"random forest", "machine learning"}, RelationClass::subtopic},
                      {{"knowledge graph", "blockchain"}, RelationClass::other},
                      {{"blockchain", "knowledge graph"}, RelationClass::same_as}};
  const auto r = consistency_filter(s);
  if (r.kept.size() != 2 || !r.kept.contains({"machine learning", "random forest"}) || r.discarded.size() != 1 ||
      r.discarded[0].pair != OrderedPair{"blockchain", "knowledge graph"})
    return fail("worked examples not reproduced");
  return pass("exactly 4 of 16 combinations survive; worked examples reproduced");
}

Outcome split_integrity() {
  std::mt19937_64 rng(5150);
  for (int set = 0; set < 1000; ++set) {
    std::vector<LabeledTriple> triples;
    const int n = 1 + static_cast<int>(rng() % 80);
    for (int i = 0; i < n; ++i) {
      const auto a = "a" + std::to_string(i), b = "b" + std::to_string(i);
      const auto rel = class_at(rng() % 4);
      triples.push_back({a, b, rel});
      if (rng() % 2) triples.push_back({b, a, inverse(rel)});
    }
    std::shuffle(triples.begin(), triples.end(), rng);
    const auto split = make_splits(triples, {0.7, 0.1, 0.2}, rng());
    std::map<OrderedPair, SplitName> where;
    for (auto s : kAllSplits)
      for (const auto& t : split.part(s)) where[pair_key(t.topic_a, t.topic_b)] = s;
    for (const auto& [p, s] : where)
      if (auto it = where.find({p.second, p.first}); it != where.end() && it->second != s)
        return fail("set " + std::to_string(set) + " separates (" + p.first + ", " + p.second + ")");
    if (split.size() != triples.size()) return fail("set " + std::to_string(set) + " lost triples");
    if (!check_split_integrity(split).empty()) return fail("set " + std::to_string(set) + ": false positive");
  }
  std::size_t detected = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<LabeledTriple> triples;
    for (int i = 0; i < 20; ++i) {
      triples.push_back({"x" + std::to_string(i), "y" + std::to_string(i), RelationClass::supertopic});
      triples.push_back({"y" + std::to_string(i), "x" + std::to_string(i), RelationClass::subtopic});
    }
    auto split = make_splits(triples, {0.7, 0.1, 0.2}, static_cast<std::uint64_t>(k));
    // move one member of a pair into a different split
    auto& from = split.train;
    const auto idx = rng() % from.size();
    const auto moved = from[idx];
    from.erase(from.begin() + static_cast<long>(idx));
    (k % 2 ? split.test : split.validation).push_back(moved);
    const auto v = check_split_integrity(split);
    const auto key = pair_key(moved.topic_a, moved.topic_b);
    const bool named = std::any_of(v.begin(), v.end(), [&](const SplitViolation& x) {
      return x.describe().find(key.first) != std::string::npos && x.describe().find(key.second) != std::string::npos;
    });
    detected += named;
  }
  if (detected != 100) return fail(std::to_string(detected) + "/100 injected violations detected");
  return pass("1000 random sets intact; 100/100 injected violations detected");
}

Outcome classifier() {
  ForestHyperparams hp;
  hp.n_trees = 100;
  const auto onehot_train = fixture::onehot_dataset(600, 1), onehot_test = fixture::onehot_dataset(400, 2);
  std::string first;
  for (int run = 0; run < 3; ++run) {
    const auto text = serialize_model(train_forest(onehot_train, hp, 42, 1 + static_cast<std::size_t>(run)));
    if (run == 0) first = text;
    else if (text != first) return fail("run " + std::to_string(run + 1) + " serialized a different model");
  }
  const double acc1 = evaluate(parse_model(first), onehot_test).accuracy;
  const auto band_train = fixture::band_dataset(800, 3), band_test = fixture::band_dataset(400, 4);
  const double acc2 = evaluate(train_forest(band_train, hp, 42), band_test).accuracy;
  std::ostringstream d;
  d << "3 identical models; one-hot accuracy " << acc1 << " (>= 0.99); band accuracy " << acc2 << " (>= 0.95)";
  if (acc1 < 0.99 || acc2 < 0.95) return fail(d.str());
  return pass(d.str());
}

Outcome metrics() {
  const auto f = fixture::metrics_fixture();
  const auto r = evaluate_predictions(f.gold, f.pred);
  if (std::abs(r.accuracy - f.accuracy) > 1e-12) return fail("accuracy");
  for (std::size_t c = 0; c < 4; ++c)
    if (std::abs(r.per_class[c].precision - f.precision[c]) > 1e-12 || std::abs(r.per_class[c].recall - f.recall[c]) > 1e-12 ||
        std::abs(r.per_class[c].f1 - f.f1[c]) > 1e-12)
      return fail("class " + std::string(to_string(class_at(c))));
  const std::vector<RelationClass> gold{RelationClass::supertopic, RelationClass::supertopic},
      pred{RelationClass::subtopic, RelationClass::subtopic};
  const auto d = evaluate_predictions(gold, pred);
  for (const auto& m : d.per_class)
    if (m.f1 != 0.0) return fail("degenerate class F1 is not 0");
  return pass("12-example fixture within 1e-12; degenerate classes give F1 = 0");
}

Outcome cycle_breaking() {
  std::mt19937_64 rng(1000);
  std::size_t max_nodes = 0, removed = 0;
  for (int g = 0; g < 1000; ++g) {
    const std::size_t n = 2 + rng() % 999;
    max_nodes = std::max(max_nodes, n);
    const auto edges = fixture::random_digraph(n, n + rng() % (2 * n), rng);
    std::map<Edge, std::uint64_t> w;
    for (const auto& e : edges) w[e] = rng() % 20;
    const auto r = break_cycles(edges, [&](const Edge& e) { return w.at(e); });
    if (find_cycle(r.edges)) return fail("graph " + std::to_string(g) + " still cyclic");
    removed += r.removed.size();
  }
  const std::set<Edge> tri{{"A", "B"}, {"B", "C"}, {"C", "A"}};
  const std::map<Edge, std::uint64_t> w{{{"A", "B"}, 10}, {{"B", "C"}, 5}, {{"C", "A"}, 8}};
  const auto r = break_cycles(tri, [&](const Edge& e) { return w.at(e); });
  if (r.removed.size() != 1 || r.removed[0].edge != Edge{"B", "C"}) return fail("(10, 5, 8) fixture did not remove B->C");
  const auto t = break_cycles(tri, [](const Edge&) { return std::uint64_t{7}; });
  if (t.removed.size() != 1 || t.removed[0].edge != Edge{"C", "A"}) return fail("equal-weight tie-break did not remove C->A");
  return pass("1000 graphs (up to " + std::to_string(max_nodes) + " nodes, " + std::to_string(removed) +
              " edges removed) acyclic; B->C removed; tie removes C->A");
}

Outcome serialization() {
  DraftTaxonomy d{"x", {{"x", {}}}};
  if (serialize_draft(d) != R"({"x": {"supertopic": [], "subtopic": [], "same-as": []}})") return fail("draft format");
  Ontology o;
  o.nodes["x"].main_label = "x";
  if (serialize_ontology(o) != R"({"x": {"main_label": "x", "supertopic": [], "subtopic": [], "alternative-label": []}})")
    return fail("ontology format");
  std::mt19937_64 rng(100);
  for (int i = 0; i < 100; ++i) {
    auto r = fixture::random_ontology(1 + rng() % 40, rng);
    r.expert_edges.clear();
    if (parse_ontology(serialize_ontology(r)) != r) return fail("round trip " + std::to_string(i));
  }
  return pass("literal formats match; 100 random round trips are identity");
}

Outcome planted_end_to_end() {
  const fs::path data = fs::path(ONTOGEN_TEST_DATA) / "planted";
  std::ifstream in(data / "config.json");
  const auto base = nlohmann::json::parse(in);
  TempDir a("a"), b("b");
  for (const auto* dir : {&a, &b}) {
    auto j = base;
    j["output_dir"] = dir->path.string();
    Pipeline(parse_config(j, data)).run_case_study();
  }
  const auto o = parse_ontology(slurp(a.path / "ontology.json"));
  const auto edges = o.edges();
  std::ifstream planted(data / "planted_edges.tsv");
  std::size_t n = 0;
  for (std::string line; std::getline(planted, line); ++n) {
    const auto f = split_tabs(line);
    if (!edges.contains({std::string(f[0]), std::string(f[1])})) return fail("missing planted edge " + line);
  }
  if (find_cycle(edges)) return fail("cycle in output");
  std::size_t files = 0;
  for (const auto& f : fs::recursive_directory_iterator(a.path)) {
    if (!f.is_regular_file() || f.path().filename() == "manifest.jsonl") continue;
    ++files;
    if (slurp(f.path()) != slurp(b.path / fs::relative(f.path(), a.path)))
      return fail("runs differ in " + fs::relative(f.path(), a.path).string());
  }
  return pass(std::to_string(n) + "/" + std::to_string(n) + " planted edges, acyclic, " + std::to_string(files) +
              " artifacts byte-identical across runs");
}

/// $CSO21K_DIR layout: {train,validation,test}.tsv (topic_a, topic_b, relation),
/// features.{train,validation,test}.tsv (feature dump, aggregate schema),
/// lm_predictions.tsv (topic_a, topic_b, class).
Outcome cso21k() {
  const char* env = std::getenv("CSO21K_DIR");
  if (!env || !*env) return {Verdict::skip, "CSO21K_DIR not set; benchmark data not supplied"};
  const fs::path dir(env);
  auto lm = TableLmProvider::load(dir / "lm_predictions.tsv", MissingPolicy::feature_only);
  DatasetSplit split;
  std::array<std::vector<LabeledExample>, 3> sets;
  for (auto s : kAllSplits) {
    const auto name = std::string(to_string(s));
    split.part(s) = load_triples(dir / (name + ".tsv")).triples;
    std::ifstream fin(dir / ("features." + name + ".tsv"));
    if (!fin) return fail("missing features." + name + ".tsv");
    std::map<OrderedPair, FusedFeatureVector> by_pair;
    for (auto& row : read_feature_rows(fin).rows) by_pair[pair_key(row.topic_a, row.topic_b)] = row.vector;
    for (const auto& t : split.part(s)) {
      const auto key = pair_key(t.topic_a, t.topic_b);
      auto it = by_pair.find(key);
      if (it == by_pair.end()) return fail("no features for (" + key.first + ", " + key.second + ") in " + name);
      auto v = it->second;
      v.lm_onehot = {};
      if (auto c = lm.get_prediction(key.first, key.second)) v.lm_onehot[index_of(*c)] = 1;
      sets[static_cast<std::size_t>(s)].push_back({v, t.relation, key});
    }
  }
  const auto summary = summarize_split(split, {0.7, 0.1, 0.2}, 21649);
  const auto violations = check_split_integrity(split);
  ForestHyperparams hp;
  const auto model = train_forest(sets[0], hp, 42);
  const double acc = evaluate(model, sets[2]).accuracy;
  std::ostringstream d;
  d << "test accuracy " << acc << " (>= 0.94); " << summary.findings.size() << " split findings, " << violations.size()
    << " integrity violations reported";
  return acc >= 0.94 ? pass(d.str()) : fail(d.str());
}

}  // namespace

int main() {
  criterion("subsumption oracle", 5, subsumption_oracle);
  criterion("indexer oracle", 30, indexer_oracle);
  criterion("consistency filter exhaustiveness", 0, consistency_exhaustive);
  criterion("split integrity", 0, split_integrity);
  criterion("classifier determinism+separability", 120, classifier);
  criterion("metrics harness", 0, metrics);
  criterion("cycle breaking", 0, cycle_breaking);
  criterion("serialization", 0, serialization);
  criterion("end-to-end planted structure", 60, planted_end_to_end);
  criterion("CSO-21K reproduction (conditional)", 0, cso21k);
  std::printf("%s\n", failures ? "ACCEPTANCE: FAIL" : "ACCEPTANCE: PASS");
  return failures ? 1 : 0;
}
