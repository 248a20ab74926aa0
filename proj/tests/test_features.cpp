#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "ontogen/features.hpp"

using namespace ontogen;

TEST_CASE("compute_subsumption examples", "[features]") {
  CHECK(compute_subsumption(100, 1000, 80) == Catch::Approx(0.72).margin(1e-12));
  CHECK(compute_subsumption(7, 7, 3) == 0.0);
  CHECK(compute_subsumption(5, 9, 0) == 0.0);
  CHECK_THROWS_AS(compute_subsumption(0, 3, 0), UndefinedFeatureError);
  CHECK_THROWS_AS(compute_subsumption(3, 0, 0), UndefinedFeatureError);
  CHECK_THROWS_AS(compute_subsumption(3, 5, 4), InvariantError);
}

TEST_CASE("subsumption properties", "[features][property]") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t a = 1 + rng() % 100000, b = 1 + rng() % 100000;
    const std::uint64_t c = rng() % (std::min(a, b) + 1);
    const double s = compute_subsumption(a, b, c);
    CHECK(std::abs(s - oracle::subsumption(double(a), double(b), double(c))) <= 1e-12);
    CHECK(s == -compute_subsumption(b, a, c));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    const std::uint64_t k = 1 + rng() % 50;
    CHECK(std::abs(compute_subsumption(a * k, b * k, c * k) - s) <= 1e-12);
  }
}

namespace {

OccurrenceStats planted_stats() {
  // doc1: A B, doc2: A, doc3: B, doc4: B  => occ_a 2, occ_b 3, coocc 1
  OccurrenceStats s({"A", "B", "C"}, YearWindow{2015, 2024});
  const std::size_t a = s.index_of("A"), b = s.index_of("B");
  std::vector<std::size_t> d1{a, b}, d2{a}, d3{b}, d4{b, b};
  s.add_document(9, d1);
  s.add_document(9, d2);
  s.add_document(3, d3);
  s.add_document(3, d4);
  return s;
}

}  // namespace

TEST_CASE("compute_features aggregate mode", "[features]") {
  const auto s = planted_stats();
  const auto f = std::get<AggregateFeatures>(compute_features("A", "B", s, FeatureMode::aggregate));
  CHECK(f.occ_a == 2);
  CHECK(f.occ_b == 3);
  CHECK(f.coocc_ab == 1);
  CHECK(f.subsumption == Catch::Approx(1.0 / 6.0).margin(1e-12));

  const auto m = std::get<AggregateFeatures>(
      compute_features("A", "B", s, FeatureMode::aggregate, OccurrenceUnit::mentions));
  CHECK(m.occ_b == 4);

  const auto zero = std::get<AggregateFeatures>(compute_features("A", "C", s, FeatureMode::aggregate));
  CHECK(zero == AggregateFeatures{2, 0, 0, 0.0});
  CHECK_THROWS_AS(compute_features("A", "Z", s, FeatureMode::aggregate), LookupError);
}

TEST_CASE("compute_features yearly mode", "[features]") {
  const auto s = planted_stats();
  const auto f = compute_features("A", "B", s, FeatureMode::yearly);
  const auto& y = std::get<YearlyFeatures>(f);
  REQUIRE(y.per_year.size() == 10);
  CHECK(flatten(f).size() == 40);
  CHECK(y.per_year[9] == AggregateFeatures{2, 1, 1, 0.5 - 1.0});
  CHECK(y.per_year[3] == AggregateFeatures{0, 2, 0, 0.0});
  CHECK(FeatureSchema::of(f).id() == "yearly40+lm4.v1");
  CHECK(FeatureSchema::of(f).dim() == 44);
}

TEST_CASE("fuse one-hot encoding", "[features]") {
  const NumericFeatures f = AggregateFeatures{1, 2, 1, 0.5};
  CHECK(fuse(f, std::optional(RelationClass::same_as)).lm_onehot == std::array<std::uint8_t, 4>{0, 0, 1, 0});
  CHECK(fuse(f, std::optional<RelationClass>{}).lm_onehot == std::array<std::uint8_t, 4>{0, 0, 0, 0});
  CHECK(fuse(f, std::optional<std::string_view>("same-as")).lm_onehot == std::array<std::uint8_t, 4>{0, 0, 1, 0});
  CHECK_THROWS_AS(fuse(f, std::optional<std::string_view>("equivalent")), SchemaError);
  const auto v = fuse(f, std::optional(RelationClass::other));
  CHECK(v.values() == std::vector<double>{1, 2, 1, 0.5, 0, 0, 0, 1});
  CHECK(v.schema.id() == "aggregate4+lm4.v1");
}

TEST_CASE("feature dump round-trips", "[features][persist]") {
  std::vector<FeatureRow> rows;
  rows.push_back({"a", "b", fuse(AggregateFeatures{3, 7, 2, 2.0 / 3 - 2.0 / 7}, std::optional(RelationClass::subtopic))});
  rows.push_back({"b", "a", fuse(AggregateFeatures{7, 3, 2, 2.0 / 7 - 2.0 / 3}, std::optional<RelationClass>{})});
  std::stringstream buf;
  write_feature_rows(buf, rows[0].vector.schema, rows);
  auto dump = read_feature_rows(buf);
  CHECK(dump.schema == rows[0].vector.schema);
  CHECK(dump.rows == rows);

  std::istringstream headerless("a\tb\t1\t2\t1\t0.5\tsupertopic\n");
  CHECK(read_feature_rows(headerless).rows.at(0).vector.lm_class() == RelationClass::supertopic);
  std::istringstream bad("a\tb\t1\t2\t1\t0.5\tbroader\n");
  CHECK_THROWS_AS(read_feature_rows(bad), ParseError);
}

TEST_CASE("fuse is injective on (numeric, lm)", "[features][property]") {
  std::mt19937_64 rng(5);
  std::map<std::vector<double>, std::pair<AggregateFeatures, int>> seen;
  const std::array<std::optional<RelationClass>, 5> classes{std::nullopt, RelationClass::supertopic, RelationClass::subtopic,
                                                            RelationClass::same_as, RelationClass::other};
  for (int i = 0; i < 3000; ++i) {
    const std::uint64_t a = 1 + rng() % 6, b = 1 + rng() % 6, c = rng() % (std::min(a, b) + 1);
    const AggregateFeatures f{a, b, c, compute_subsumption(a, b, c)};
    const int k = static_cast<int>(rng() % classes.size());
    const auto v = fuse(NumericFeatures{f}, classes[static_cast<std::size_t>(k)]).values();
    auto [it, fresh] = seen.emplace(v, std::pair{f, k});
    if (!fresh) {
      CHECK(it->second.second == k);
      CHECK(it->second.first.occ_a == f.occ_a);
      CHECK(it->second.first.occ_b == f.occ_b);
      CHECK(it->second.first.coocc_ab == f.coocc_ab);
    }
  }
}
