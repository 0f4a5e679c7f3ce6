#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "embmark/model.hpp"
#include "embmark/verify.hpp"

namespace httplib {
class Server;
}

namespace embmark {

// Client-side query cap. Every query is counted before it is sent; a query
// that would exceed max_queries raises BudgetExhausted and is not sent.
class QueryBudget {
 public:
  explicit QueryBudget(std::optional<std::uint64_t> max_queries = std::nullopt,
                       std::optional<double> cost_per_query = std::nullopt)
      : max_(max_queries), cost_per_query_(cost_per_query) {}

  void consume();
  std::uint64_t used() const { return used_.load(); }
  std::optional<std::uint64_t> max_queries() const { return max_; }
  std::optional<double> cost() const;

 private:
  std::optional<std::uint64_t> max_;
  std::optional<double> cost_per_query_;
  std::atomic<std::uint64_t> used_{0};
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};  // doubled after each failed attempt
  std::chrono::milliseconds timeout{10000};
};

// HTTP front end for one immutable model.
//   POST /classify      {"tokens":[...]}                              -> {"label","logits","latency_ms"}
//   POST /generate      {"tokens":[...],"max_len","temperature","seed"} -> {"tokens":[...]}
//   POST /classify_text {"text":...}  server-side tokenization, non-canonical
//   POST /encode        {"texts":[...]} -> {"vectors":[[...]]}  (only when an encoder is attached)
//   GET  /healthz       -> {"bundle_sha256":hex}
// Malformed bodies get 400 {"error":"bad_request"}; model errors get 422
// {"error":<error name>,"message":...}.
class ModelServer {
 public:
  ModelServer(ToyModel model, std::string bundle_sha256);
  ~ModelServer();
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Serves pooled reference-embedding vectors on /encode.
  void attach_encoder(EmbeddingMatrix reference);
  // Binds (port 0 picks a free port) and serves on a background thread.
  // Throws BindFailure. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }
  std::string base_url() const;

 private:
  void install_routes();

  ToyModel model_;
  std::string bundle_sha256_;
  std::optional<PooledEmbeddingProvider> encoder_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

std::unique_ptr<ModelServer> open_bundle_server(const std::filesystem::path& bundle_dir);

// QueryModel over HTTP. Transport failures are retried up to policy.attempts
// times with exponential backoff, then raise Transport. Only one budget unit
// is charged per logical query.
class RemoteModel : public QueryModel {
 public:
  RemoteModel(std::string base_url, QueryBudget& budget, RetryPolicy policy = {});
  std::string classify(const TokenList& tokens) override;
  TokenList generate(const TokenList& tokens, std::size_t max_len, double temperature,
                     std::uint64_t seed) override;
  std::uint64_t query_count() const override { return count_.load(); }
  std::string health();

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  std::string base_url_;
  QueryBudget& budget_;
  RetryPolicy policy_;
  std::atomic<std::uint64_t> count_{0};
};

// Sentence vectors from an external /encode service. Failures after the retry
// policy raise ProviderUnavailable.
class HttpSimilarityProvider : public SimilarityProvider {
 public:
  explicit HttpSimilarityProvider(std::string base_url, RetryPolicy policy = {});
  std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override;

 private:
  std::string base_url_;
  RetryPolicy policy_;
};

}  // namespace embmark
