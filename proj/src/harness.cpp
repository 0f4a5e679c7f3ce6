#include "embmark/harness.hpp"

#include <chrono>

#include "embmark/error.hpp"
#include "httplib.h"

namespace embmark {

namespace {

using Json = nlohmann::json;

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void bad_request(httplib::Response& res, const std::string& message) {
  reply(res, 400, {{"error", "bad_request"}, {"message", message}});
}

// Parses the body and runs fn; maps failures onto HTTP statuses.
template <typename Fn>
void handle(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
  Json body;
  try {
    body = Json::parse(req.body);
    if (!body.is_object()) throw std::invalid_argument("body must be a JSON object");
  } catch (const std::exception& e) {
    bad_request(res, e.what());
    return;
  }
  try {
    reply(res, 200, fn(body));
  } catch (const Error& e) {
    reply(res, 422, {{"error", errc_name(e.code())}, {"message", e.what()}});
  } catch (const Json::exception& e) {
    bad_request(res, e.what());
  }
}

TokenList token_array(const Json& body, const char* key) {
  const auto& arr = body.at(key);
  if (!arr.is_array()) throw Json::type_error::create(302, std::string(key) + " must be an array", &arr);
  return arr.get<TokenList>();
}

}  // namespace

void QueryBudget::consume() {
  std::uint64_t cur = used_.load();
  do {
    if (max_ && cur >= *max_) {
      throw Error(Errc::BudgetExhausted, "query budget of " + std::to_string(*max_) + " exhausted");
    }
  } while (!used_.compare_exchange_weak(cur, cur + 1));
}

std::optional<double> QueryBudget::cost() const {
  if (!cost_per_query_) return std::nullopt;
  return *cost_per_query_ * static_cast<double>(used());
}

ModelServer::ModelServer(ToyModel model, std::string bundle_sha256)
    : model_(std::move(model)), bundle_sha256_(std::move(bundle_sha256)), server_(std::make_unique<httplib::Server>()) {
  model_.validate();
  install_routes();
}

ModelServer::~ModelServer() { stop(); }

void ModelServer::attach_encoder(EmbeddingMatrix reference) { encoder_.emplace(std::move(reference)); }

void ModelServer::install_routes() {
  server_->Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
    handle(req, res, [this](const Json& body) {
      const auto start = std::chrono::steady_clock::now();
      const auto out = classify(model_, token_array(body, "tokens"));
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return Json{{"label", out.label}, {"logits", out.logits}, {"latency_ms", ms}};
    });
  });
  server_->Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
    handle(req, res, [this](const Json& body) {
      GenerateOptions opt;
      opt.max_len = body.value("max_len", opt.max_len);
      opt.temperature = body.value("temperature", opt.temperature);
      opt.seed = body.value("seed", opt.seed);
      return Json{{"tokens", generate(model_, token_array(body, "tokens"), opt)}};
    });
  });
  server_->Post("/classify_text", [this](const httplib::Request& req, httplib::Response& res) {
    handle(req, res, [this](const Json& body) {
      const auto tokens = tokenize(body.at("text").get<std::string>(), model_.embeddings.vocab());
      const auto out = classify(model_, tokens);
      return Json{{"label", out.label}, {"logits", out.logits}, {"tokens", tokens}, {"canonical", false}};
    });
  });
  server_->Post("/encode", [this](const httplib::Request& req, httplib::Response& res) {
    if (!encoder_) {
      reply(res, 404, {{"error", "not_found"}, {"message", "no encoder attached"}});
      return;
    }
    handle(req, res, [this](const Json& body) {
      return Json{{"vectors", encoder_->encode(body.at("texts").get<std::vector<std::string>>())}};
    });
  });
  server_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"bundle_sha256", bundle_sha256_}});
  });
}

int ModelServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(Errc::BindFailure, "cannot bind " + host);
  } else {
    if (!server_->bind_to_port(host, port)) throw Error(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ModelServer::run(const std::string& host, int port) {
  host_ = host;
  if (!server_->bind_to_port(host, port)) throw Error(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void ModelServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string ModelServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

std::unique_ptr<ModelServer> open_bundle_server(const std::filesystem::path& bundle_dir) {
  return std::make_unique<ModelServer>(load_bundle(bundle_dir), bundle_sha256(bundle_dir));
}

namespace {

enum class Outcome { Ok, Retry, Fail };

// One POST/GET with retries. Returns the parsed body of a 200 reply; a 422
// reply is rethrown as the server-side error.
Json request(const std::string& base_url, const RetryPolicy& policy, const std::string& method, const std::string& path,
             const Json& body, Errc transport_code) {
  auto backoff = policy.backoff;
  std::string last = "no attempt made";
  for (int attempt = 1; attempt <= std::max(1, policy.attempts); ++attempt) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(policy.timeout);
    cli.set_read_timeout(policy.timeout);
    cli.set_write_timeout(policy.timeout);
    auto res = method == "GET" ? cli.Get(path) : cli.Post(path, body.dump(), "application/json");
    if (res && res->status < 500) {
      Json reply;
      try {
        reply = Json::parse(res->body);
      } catch (const Json::exception& e) {
        throw Error(Errc::ProtocolError, path + ": unparsable reply: " + e.what());
      }
      if (res->status == 200) return reply;
      Errc code;
      const std::string name = reply.value("error", std::string());
      if (res->status == 422 && errc_from_name(name, code)) {
        const std::string msg = reply.value("message", std::string());
        const std::string prefix = name + ": ";
        throw Error(code, msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg);
      }
      throw Error(Errc::ProtocolError, path + ": HTTP " + std::to_string(res->status) + " " + reply.dump());
    }
    last = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < policy.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(transport_code, base_url + path + " failed after " + std::to_string(std::max(1, policy.attempts)) +
                                  " attempts: " + last);
}

}  // namespace

RemoteModel::RemoteModel(std::string base_url, QueryBudget& budget, RetryPolicy policy)
    : base_url_(std::move(base_url)), budget_(budget), policy_(policy) {}

Json RemoteModel::post(const std::string& path, const Json& body) {
  budget_.consume();
  ++count_;
  return request(base_url_, policy_, "POST", path, body, Errc::Transport);
}

std::string RemoteModel::classify(const TokenList& tokens) {
  const auto reply = post("/classify", {{"tokens", tokens}});
  try {
    return reply.at("label").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("/classify reply: ") + e.what());
  }
}

TokenList RemoteModel::generate(const TokenList& tokens, std::size_t max_len, double temperature, std::uint64_t seed) {
  const auto reply =
      post("/generate", {{"tokens", tokens}, {"max_len", max_len}, {"temperature", temperature}, {"seed", seed}});
  try {
    return reply.at("tokens").get<TokenList>();
  } catch (const Json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("/generate reply: ") + e.what());
  }
}

std::string RemoteModel::health() {
  const auto reply = request(base_url_, policy_, "GET", "/healthz", {}, Errc::Transport);
  return reply.value("bundle_sha256", std::string());
}

HttpSimilarityProvider::HttpSimilarityProvider(std::string base_url, RetryPolicy policy)
    : base_url_(std::move(base_url)), policy_(policy) {}

std::vector<std::vector<double>> HttpSimilarityProvider::encode(const std::vector<std::string>& texts) {
  const auto reply = request(base_url_, policy_, "POST", "/encode", {{"texts", texts}}, Errc::ProviderUnavailable);
  std::vector<std::vector<double>> vectors;
  try {
    vectors = reply.at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("/encode reply: ") + e.what());
  }
  if (vectors.size() != texts.size()) {
    throw Error(Errc::ProtocolError, "/encode returned " + std::to_string(vectors.size()) + " vectors for " +
                                         std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw Error(Errc::ProtocolError, "/encode vectors differ in length");
  }
  return vectors;
}

}  // namespace embmark
