#include <gtest/gtest.h>

#include <atomic>
#include <functional>

#include "embmark/error.hpp"
#include "embmark/harness.hpp"
#include "embmark/verify.hpp"
#include "httplib.h"
#include "support.hpp"

namespace embmark {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::InvalidArgument;
}

RetryPolicy fast_policy() {
  RetryPolicy p;
  p.attempts = 2;
  p.backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::milliseconds(2000);
  return p;
}

// Bare HTTP stub that counts every request it receives.
class StubServer {
 public:
  std::atomic<int> hits{0};
  std::function<void(const httplib::Request&, httplib::Response&)> handler;

  StubServer() {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      handler(req, res);
    };
    server_.Post(".*", route);
    server_.Get(".*", route);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

class ServedModel : public ::testing::Test {
 protected:
  void SetUp() override {
    model_ = test::random_model(50, 8, 3, 1);
    server_ = std::make_unique<ModelServer>(model_, "abc123");
    server_->attach_encoder(model_.embeddings);
    server_->start();
  }
  void TearDown() override { server_->stop(); }

  ToyModel model_;
  std::unique_ptr<ModelServer> server_;
};

TEST_F(ServedModel, PassthroughMatchesLocal) {
  QueryBudget budget;
  RemoteModel remote(server_->base_url(), budget, fast_policy());
  LocalModel local(model_);
  for (std::size_t i = 0; i < 10; ++i) {
    const TokenList x = {"w" + std::to_string(i), "w" + std::to_string(i + 7), "unseen"};
    EXPECT_EQ(remote.classify(x), local.classify(x));
    EXPECT_EQ(remote.generate(x, 5, 0.0, 0), local.generate(x, 5, 0.0, 0));
    EXPECT_EQ(remote.generate(x, 5, 0.8, i), local.generate(x, 5, 0.8, i));
    EXPECT_EQ(remote.generate(x, 5, 0.8, i), remote.generate(x, 5, 0.8, i));
  }
  EXPECT_EQ(remote.query_count(), 50u);
  EXPECT_EQ(budget.used(), 50u);
  EXPECT_EQ(remote.health(), "abc123");
}

TEST_F(ServedModel, MalformedBodyGets400) {
  httplib::Client cli(server_->base_url());
  auto res = cli.Post("/classify", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"], "bad_request");
  res = cli.Post("/classify", R"({"tokens": 5})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServedModel, ModelErrorsMapTo422AndBack) {
  httplib::Client cli(server_->base_url());
  auto res = cli.Post("/classify", R"({"tokens": ["nothing", "known"]})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"], "NoKnownTokens");
  QueryBudget budget;
  RemoteModel remote(server_->base_url(), budget, fast_policy());
  EXPECT_EQ(code_of([&] { remote.classify({"nothing"}); }), Errc::NoKnownTokens);
}

TEST_F(ServedModel, EncodeEndpointMatchesPooledProvider) {
  HttpSimilarityProvider http(server_->base_url(), fast_policy());
  PooledEmbeddingProvider local(model_.embeddings);
  const std::vector<std::string> texts = {"w1 w2", "w3", "w4 w4 w9"};
  EXPECT_EQ(http.encode(texts), local.encode(texts));
  httplib::Client cli(server_->base_url());
  auto res = cli.Post("/encode", R"({"texts": ["w1"]})", "application/json");
  ASSERT_TRUE(res);
  const auto body = nlohmann::json::parse(res->body);
  EXPECT_EQ(body["vectors"].size(), 1u);
  EXPECT_EQ(body["vectors"][0].size(), 8u);
}

TEST_F(ServedModel, LocalAndRemoteReportsAreEqual) {
  MappingSet phi;
  phi.pairs = {{"w1", "w2"}, {"w3", "w4"}};
  TemplateMap t;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      t[i].push_back("w" + std::to_string(10 + j) + " {SLOT} w" + std::to_string(30 + i + j));
  const auto set = build_verification_set(phi, t);
  const std::vector<std::string> syn = {"w40", "w41"};
  LocalModel local(model_);
  QueryBudget budget;
  RemoteModel remote(server_->base_url(), budget, fast_policy());
  PooledEmbeddingProvider provider(model_.embeddings);
  NlgOptions opt;
  const auto a = wacc_nlg(local, set, phi, 0.5, provider, opt);
  const auto b = wacc_nlg(remote, set, phi, 0.5, provider, opt);
  EXPECT_EQ(a.to_json(false), b.to_json(false));
  EXPECT_EQ(b.total_queries, budget.used());
  try {
    const auto c = verify_nlu(local, set, phi, syn);
    const auto d = verify_nlu(remote, set, phi, syn, 3);
    EXPECT_EQ(c.to_json(false), d.to_json(false));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyAfterFilter);
  }
}

TEST(Budget, CapRaisesBeforeSending) {
  StubServer stub;
  stub.handler = [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"label":"x","logits":[0],"latency_ms":0})", "application/json");
  };
  QueryBudget budget(5, 0.25);
  RemoteModel remote(stub.url(), budget, fast_policy());
  for (int i = 0; i < 5; ++i) EXPECT_EQ(remote.classify({"a"}), "x");
  EXPECT_EQ(code_of([&] { remote.classify({"a"}); }), Errc::BudgetExhausted);
  EXPECT_EQ(stub.hits.load(), 5);
  EXPECT_EQ(budget.used(), 5u);
  EXPECT_DOUBLE_EQ(*budget.cost(), 1.25);
}

TEST(Budget, RetriesChargeOnce) {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.handler = [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      res.set_content("{}", "application/json");
      return;
    }
    res.set_content(R"({"label":"y"})", "application/json");
  };
  QueryBudget budget;
  RemoteModel remote(stub.url(), budget, fast_policy());
  EXPECT_EQ(remote.classify({"a"}), "y");
  EXPECT_EQ(stub.hits.load(), 2);
  EXPECT_EQ(budget.used(), 1u);
}

TEST(Transport, ServerDownRaisesTransport) {
  int port;
  {
    StubServer stub;
    port = std::stoi(stub.url().substr(stub.url().rfind(':') + 1));
  }
  QueryBudget budget;
  RemoteModel remote("http://127.0.0.1:" + std::to_string(port), budget, fast_policy());
  EXPECT_EQ(code_of([&] { remote.classify({"a"}); }), Errc::Transport);
  HttpSimilarityProvider provider("http://127.0.0.1:" + std::to_string(port), fast_policy());
  EXPECT_EQ(code_of([&] { provider.encode({"a"}); }), Errc::ProviderUnavailable);
}

TEST(Transport, MalformedRepliesAreProtocolErrors) {
  StubServer stub;
  stub.handler = [](const httplib::Request& req, httplib::Response& res) {
    if (req.path == "/encode") res.set_content(R"({"vectors":[[1,2]]})", "application/json");
    else res.set_content("not json", "text/plain");
  };
  QueryBudget budget;
  RemoteModel remote(stub.url(), budget, fast_policy());
  EXPECT_EQ(code_of([&] { remote.classify({"a"}); }), Errc::ProtocolError);
  HttpSimilarityProvider provider(stub.url(), fast_policy());
  EXPECT_EQ(code_of([&] { provider.encode({"a", "b"}); }), Errc::ProtocolError);
}

TEST(Server, BindFailure) {
  ModelServer server(test::random_model(5, 4, 2, 2), "h");
  // Documentation-only address; no local interface carries it.
  EXPECT_EQ(code_of([&] { server.start("192.0.2.1", 0); }), Errc::BindFailure);
}

}  // namespace
}  // namespace embmark
