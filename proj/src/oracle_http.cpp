#include "exfilt/oracle_http.hpp"

#include <httplib.h>
#include <json.hpp>

#include "exfilt/errors.hpp"

namespace exfilt {

using nlohmann::json;

namespace {

json error_body(const std::string& code, const std::string& detail) {
  return json{{"error", code}, {"detail", detail}};
}

}  // namespace

struct OracleServer::Impl {
  httplib::Server server;
};

OracleServer::OracleServer(LabelOracle& oracle, const std::string& host, int port)
    : impl_(std::make_unique<Impl>()) {
  httplib::Server& srv = impl_->server;

  srv.Get("/v1/status", [&oracle](const httplib::Request&, httplib::Response& res) {
    json body{{"n_j", oracle.feature_count()},
              {"n_c", oracle.class_count()},
              {"spent", oracle.spent()},
              {"remaining", oracle.remaining()}};
    res.set_content(body.dump(), "application/json");
  });

  srv.Post("/v1/predict", [&oracle](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(error_body("bad_request", e.what()).dump(), "application/json");
      return;
    }
    if (!body.is_object() || !body.contains("samples") || !body["samples"].is_array() ||
        body["samples"].empty()) {
      res.status = 400;
      res.set_content(error_body("bad_request", "body must contain a non-empty 'samples' array")
                          .dump(),
                      "application/json");
      return;
    }
    const auto& samples = body["samples"];
    const std::size_t n_j = oracle.feature_count();
    Matrix batch(samples.size(), n_j);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& row = samples[i];
      if (!row.is_array() || row.size() != n_j) {
        res.status = 400;
        res.set_content(error_body("bad_request", "sample " + std::to_string(i) +
                                                      " must be an array of " +
                                                      std::to_string(n_j) + " numbers")
                            .dump(),
                        "application/json");
        return;
      }
      for (std::size_t j = 0; j < n_j; ++j) {
        if (!row[j].is_number()) {
          res.status = 400;
          res.set_content(
              error_body("bad_request", "non-numeric value in sample " + std::to_string(i))
                  .dump(),
              "application/json");
          return;
        }
        batch(i, j) = row[j].get<double>();
      }
    }
    try {
      const std::vector<int> labels = oracle.query(batch);
      json ok{{"labels", labels}, {"spent", oracle.spent()}, {"remaining", oracle.remaining()}};
      res.set_content(ok.dump(), "application/json");
    } catch (const BudgetExhaustedError& e) {
      res.status = 429;
      res.set_content(error_body("budget_exhausted", e.what()).dump(), "application/json");
    } catch (const InvalidQueryError& e) {
      res.status = 422;
      json err = error_body("invalid_query", e.what());
      err["rows"] = e.rows;
      res.set_content(err.dump(), "application/json");
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(error_body("bad_request", e.what()).dump(), "application/json");
    }
  });

  if (port == 0) {
    port_ = srv.bind_to_any_port(host);
    if (port_ <= 0) throw TransportError("serve: cannot bind to " + host);
  } else {
    if (!srv.bind_to_port(host, port))
      throw TransportError("serve: cannot bind to " + host + ":" + std::to_string(port));
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  srv.wait_until_ready();
}

OracleServer::~OracleServer() { stop(); }

void OracleServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void OracleServer::wait() {
  if (thread_.joinable()) thread_.join();
}

struct HttpOracleClient::Impl {
  explicit Impl(const std::string& url) : client(url) {
    client.set_connection_timeout(10);
    client.set_read_timeout(600);
  }
  httplib::Client client;
  std::size_t n_j = 0;
  int n_c = 0;
  std::int64_t spent = 0;
  std::int64_t remaining = kUnlimitedBudget;
};

namespace {

[[noreturn]] void throw_from_error_body(int status, const std::string& body) {
  std::string code = "bad_request";
  std::string detail = body;
  try {
    const json err = json::parse(body);
    code = err.value("error", code);
    detail = err.value("detail", detail);
  } catch (const json::exception&) {
    // Non-JSON error body; report it verbatim.
  }
  if (code == "budget_exhausted") throw BudgetExhaustedError("remote oracle: " + detail);
  if (code == "invalid_query") throw InvalidQueryError("remote oracle: " + detail, {});
  throw Error("remote oracle: HTTP " + std::to_string(status) + ": " + detail);
}

}  // namespace

HttpOracleClient::HttpOracleClient(const std::string& base_url)
    : impl_(std::make_unique<Impl>(base_url)) {
  auto res = impl_->client.Get("/v1/status");
  if (!res) throw TransportError("remote oracle: cannot reach " + base_url);
  if (res->status != 200) throw_from_error_body(res->status, res->body);
  try {
    const json status = json::parse(res->body);
    impl_->n_j = status.at("n_j").get<std::size_t>();
    impl_->n_c = status.at("n_c").get<int>();
    impl_->spent = status.at("spent").get<std::int64_t>();
    impl_->remaining = status.at("remaining").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("remote oracle: malformed status body: ") + e.what());
  }
}

HttpOracleClient::~HttpOracleClient() = default;

std::vector<int> HttpOracleClient::query(const Matrix& batch) {
  json rows = json::array();
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < batch.cols(); ++j) row.push_back(batch(i, j));
    rows.push_back(std::move(row));
  }
  const std::string body = json{{"samples", std::move(rows)}}.dump();
  auto res = impl_->client.Post("/v1/predict", body, "application/json");
  if (!res) throw TransportError("remote oracle: request failed (connection error)");
  if (res->status != 200) throw_from_error_body(res->status, res->body);
  try {
    const json ok = json::parse(res->body);
    impl_->spent = ok.at("spent").get<std::int64_t>();
    impl_->remaining = ok.at("remaining").get<std::int64_t>();
    return ok.at("labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("remote oracle: malformed response: ") + e.what());
  }
}

std::int64_t HttpOracleClient::spent() const { return impl_->spent; }

std::int64_t HttpOracleClient::remaining() const { return impl_->remaining; }

std::size_t HttpOracleClient::feature_count() const { return impl_->n_j; }

int HttpOracleClient::class_count() const { return impl_->n_c; }

}  // namespace exfilt
