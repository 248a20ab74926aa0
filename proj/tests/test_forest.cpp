#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "ontogen/forest.hpp"
#include "ontogen/providers.hpp"

using namespace ontogen;

namespace {

double accuracy(const ForestModel& m, const std::vector<LabeledExample>& test) { return evaluate(m, test).accuracy; }

ForestHyperparams small_forest() {
  ForestHyperparams hp;
  hp.n_trees = 25;
  return hp;
}

}  // namespace

TEST_CASE("single-class dataset gives a degenerate model", "[forest]") {
  auto data = fixture::onehot_dataset(40, 1);
  for (auto& ex : data) {
    ex.label = RelationClass::same_as;
  }
  auto m = train_forest(data, small_forest(), 3);
  for (const auto& ex : fixture::onehot_dataset(20, 2)) {
    auto p = predict(m, ex.vector);
    CHECK(p.predicted == RelationClass::same_as);
    CHECK(p.probabilities[2] == 1.0);
  }
}

TEST_CASE("hand-built stump routes by threshold", "[forest]") {
  ForestModel m;
  m.schema = FeatureSchema{};
  DecisionTree t;
  t.add_leaf({5, 5, 0, 0});
  const auto l = t.add_leaf({0, 0, 0, 4});
  const auto r = t.add_leaf({3, 0, 0, 0});
  t.feature[0] = 3;  // subsumption
  t.threshold[0] = 0.5;
  t.left[0] = static_cast<std::uint32_t>(l);
  t.right[0] = static_cast<std::uint32_t>(r);
  m.trees.push_back(t);

  auto hi = predict(m, fuse(AggregateFeatures{100, 1000, 80, 0.72}, std::optional<RelationClass>{}));
  CHECK(hi.predicted == RelationClass::supertopic);
  CHECK(hi.probabilities == std::array<double, 4>{1, 0, 0, 0});
  auto lo = predict(m, fuse(AggregateFeatures{100, 100, 10, 0.0}, std::optional<RelationClass>{}));
  CHECK(lo.predicted == RelationClass::other);
  // exactly at the threshold goes right
  CHECK(predict(m, fuse(AggregateFeatures{2, 4, 2, 0.5}, std::optional<RelationClass>{})).predicted ==
        RelationClass::supertopic);
}

TEST_CASE("equal leaf distributions resolve to supertopic", "[forest]") {
  ForestModel m;
  DecisionTree t;
  t.add_leaf({2, 2, 2, 2});
  m.trees.push_back(t);
  CHECK(predict(m, fuse(AggregateFeatures{}, std::optional<RelationClass>{})).predicted == RelationClass::supertopic);
  CHECK(argmax_class({0.0, 0.4, 0.4, 0.2}) == RelationClass::subtopic);
}

TEST_CASE("training is deterministic and thread-count independent", "[forest][determinism]") {
  auto data = fixture::onehot_dataset(200, 7);
  const auto a = serialize_model(train_forest(data, small_forest(), 11, 1));
  const auto b = serialize_model(train_forest(data, small_forest(), 11, 4));
  CHECK(a == b);
  CHECK(a != serialize_model(train_forest(data, small_forest(), 12, 1)));
}

TEST_CASE("one-hot equal to the label separates perfectly", "[forest]") {
  auto m = train_forest(fixture::onehot_dataset(400, 21), small_forest(), 5);
  CHECK(accuracy(m, fixture::onehot_dataset(400, 22)) >= 0.99);
}

TEST_CASE("subsumption bands are learnable without the LM block", "[forest]") {
  auto m = train_forest(fixture::band_dataset(600, 31), small_forest(), 5);
  CHECK(accuracy(m, fixture::band_dataset(400, 32)) >= 0.95);
}

TEST_CASE("more clean training data stays above the no-information rate", "[forest][property]") {
  const auto test = fixture::onehot_dataset(200, 44);
  for (std::size_t n : {8u, 32u, 128u}) {
    auto m = train_forest(fixture::onehot_dataset(n, 43), small_forest(), 1);
    CHECK(accuracy(m, test) >= 0.25);
  }
}

TEST_CASE("schema mismatches are rejected", "[forest]") {
  auto data = fixture::onehot_dataset(20, 1);
  auto m = train_forest(data, small_forest(), 1);
  YearlyFeatures y;
  y.per_year.resize(10);
  CHECK_THROWS_AS(predict(m, fuse(y, std::optional<RelationClass>{})), SchemaError);
  data.push_back({fuse(y, std::optional<RelationClass>{}), RelationClass::other, {}});
  CHECK_THROWS_AS(train_forest(data, small_forest(), 1), SchemaError);
}

TEST_CASE("model serialization round-trips", "[forest][persist]") {
  auto m = train_forest(fixture::band_dataset(100, 3), small_forest(), 9);
  const auto text = serialize_model(m);
  CHECK(parse_model(text) == m);
  auto j = nlohmann::json::parse(text);
  j["format_version"] = 99;
  CHECK_THROWS_AS(parse_model(j.dump()), ParseError);
  auto k = nlohmann::json::parse(text);
  k["trees"][0]["left"][0] = 100000;
  CHECK_THROWS(parse_model(k.dump()));
}

TEST_CASE("evaluate swaps in provider classes and names failing pairs", "[forest]") {
  auto data = fixture::onehot_dataset(200, 8);
  auto m = train_forest(data, small_forest(), 2);
  auto test = fixture::onehot_dataset(20, 9);
  std::map<OrderedPair, RelationClass> table;
  for (const auto& ex : test) table[pair_key(ex.pair.first, ex.pair.second)] = ex.label;
  TableLmProvider good(table);
  CHECK(evaluate(m, test, &good).accuracy == 1.0);

  table.erase(pair_key(test[5].pair.first, test[5].pair.second));
  TableLmProvider missing(table);
  try {
    evaluate(m, test, &missing);
    FAIL("expected provider failure");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("(a5, b5)") != std::string::npos);
  }
}

TEST_CASE("argmax is invariant under strictly increasing rescaling", "[forest][property]") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::function<double(double)>> maps{
      [](double p) { return 3 * p + 1; }, [](double p) { return p * p * p; }, [](double p) { return std::exp(5 * p); },
      [](double p) { return std::log1p(p); }, [](double p) { return std::sqrt(p) - 10; }};
  for (int i = 0; i < 2000; ++i) {
    std::array<double, kNumClasses> p{};
    for (auto& x : p) x = rng() % 5 == 0 ? 0.25 : u(rng);  // repeated values exercise ties
    const auto base = argmax_class(p);
    for (const auto& f : maps) {
      auto q = p;
      for (auto& x : q) x = f(x);
      CHECK(argmax_class(q) == base);
    }
  }
}
