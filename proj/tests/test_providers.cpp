#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "ontogen/providers.hpp"

using namespace ontogen;

namespace {

/// Local stand-in for an inference service.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/predict", handler);
    server_.Post("/embed", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  RemoteProviderConfig config(std::string path = "/predict") const {
    RemoteProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    c.path = std::move(path);
    c.retries = 3;
    c.backoff_base_ms = 1;
    c.timeout_ms = 2000;
    return c;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("table provider lookup and missing-pair policies", "[providers]") {
  std::map<OrderedPair, RelationClass> t{{pair_key("machine learning", "random forest"), RelationClass::supertopic}};
  TableLmProvider strict(t);
  CHECK(strict.get_prediction("Machine Learning", "random forest") == RelationClass::supertopic);
  CHECK_THROWS_WITH(strict.get_prediction("random forest", "machine learning"),
                    Catch::Matchers::ContainsSubstring("(random forest, machine learning)"));
  TableLmProvider lenient(t, MissingPolicy::feature_only);
  CHECK_FALSE(lenient.get_prediction("random forest", "machine learning").has_value());
}

TEST_CASE("remote provider retries server errors then succeeds", "[providers]") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 503;
      return;
    }
    auto body = nlohmann::json::parse(req.body);
    CHECK(body["topic_a"] == "ontology");
    res.set_content(R"({"class": "same_as"})", "application/json");
  });
  RemoteLmProvider p(stub.config());
  CHECK(p.get_prediction("ontology", "ontologies") == RelationClass::same_as);
  CHECK(calls == 3);
}

TEST_CASE("remote provider gives up after the retry budget", "[providers]") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  RemoteLmProvider p(stub.config());
  CHECK_THROWS_AS(p.get_prediction("a", "b"), ProviderError);
  CHECK(calls == 4);
}

TEST_CASE("remote provider names the pair on malformed replies", "[providers]") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"class": "parent"})", "application/json");
  });
  RemoteLmProvider p(stub.config());
  CHECK_THROWS_WITH(p.get_prediction("databases", "sql"),
                    Catch::Matchers::ContainsSubstring("(databases, sql)") &&
                        Catch::Matchers::ContainsSubstring("parent"));

  StubServer garbage([](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  RemoteLmProvider g(garbage.config());
  CHECK_THROWS_AS(g.get_prediction("a", "b"), ProviderError);

  StubServer client_err([](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  RemoteLmProvider c(client_err.config());
  CHECK_THROWS_WITH(c.get_prediction("a", "b"), Catch::Matchers::ContainsSubstring("HTTP 404"));
}

TEST_CASE("unreachable endpoint fails with a provider error", "[providers]") {
  RemoteProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  cfg.retries = 1;
  cfg.backoff_base_ms = 1;
  cfg.timeout_ms = 200;
  RemoteLmProvider p(cfg);
  CHECK_THROWS_AS(p.get_prediction("a", "b"), ProviderError);
}

TEST_CASE("concurrent batch results stay aligned with their pairs", "[providers]") {
  std::atomic<int> in_flight{0}, peak{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight;
    for (int p = peak; now > p && !peak.compare_exchange_weak(p, now);) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    auto body = nlohmann::json::parse(req.body);
    const auto a = body["topic_a"].get<std::string>();
    res.set_content(nlohmann::json{{"class", a.size() % 2 ? "supertopic" : "other"}}.dump(), "application/json");
    --in_flight;
  });
  RemoteLmProvider p(stub.config());
  std::vector<OrderedPair> pairs;
  for (int i = 0; i < 40; ++i) pairs.emplace_back(std::string(static_cast<std::size_t>(i + 1), 'x'), "y");
  const auto out = get_predictions(p, pairs, 4);
  REQUIRE(out.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    CHECK(out[i] == (pairs[i].first.size() % 2 ? RelationClass::supertopic : RelationClass::other));
  CHECK(peak <= 4);
}

TEST_CASE("batch failure is rethrown", "[providers]") {
  std::map<OrderedPair, RelationClass> t{{pair_key("a", "b"), RelationClass::other}};
  TableLmProvider strict(t);
  std::vector<OrderedPair> pairs{{"a", "b"}, {"c", "d"}, {"a", "b"}};
  CHECK_THROWS_WITH(get_predictions(strict, pairs, 2), Catch::Matchers::ContainsSubstring("(c, d)"));
}

TEST_CASE("remote embedder parses vectors and rejects bad ones", "[providers]") {
  StubServer stub([](const httplib::Request& req, httplib::Response& res) {
    auto label = nlohmann::json::parse(req.body)["label"].get<std::string>();
    if (label == "bad") {
      res.set_content(R"({"vector": ["x"]})", "application/json");
      return;
    }
    res.set_content(R"({"vector": [3.0, 4.0]})", "application/json");
  });
  RemoteEmbedder e(stub.config("/embed"));
  CHECK(e.embed("graph") == std::vector<double>{3.0, 4.0});
  CHECK_THROWS_AS(e.embed("bad"), ProviderError);
}

TEST_CASE("hashing embedder and cosine similarity", "[providers]") {
  HashingEmbedder h(64);
  const auto a = h.embed("Neural Networks");
  CHECK(cosine_similarity(a, h.embed("neural networks")) == Catch::Approx(1.0));
  CHECK(cosine_similarity(a, h.embed("neural network")) > cosine_similarity(a, h.embed("databases")));
  CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}), ProviderError);
  CHECK_THROWS_AS(HashingEmbedder(0), ConfigError);
}
