#pragma once

#include <memory>
#include <string>
#include <thread>

#include "exfilt/oracle.hpp"

namespace exfilt {

// Serves a LabelOracle over HTTP:
//   POST /v1/predict  {"samples": [[f0, f1, ...], ...]}
//     200 -> {"labels": [...], "spent": n, "remaining": n}   (-1 = unlimited)
//     400 -> {"error": "bad_request", "detail": ...}          (nothing charged)
//     422 -> {"error": "invalid_query", "detail": ..., "rows": [...]}
//     429 -> {"error": "budget_exhausted", "detail": ...}
//   GET /v1/status -> {"n_j":.., "n_c":.., "spent":.., "remaining":..}
class OracleServer {
 public:
  // Binds immediately; port 0 picks a free port. The oracle must outlive the
  // server.
  OracleServer(LabelOracle& oracle, const std::string& host, int port);
  ~OracleServer();

  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  int port() const { return port_; }
  void stop();
  void wait();  // blocks until stop() is called from elsewhere

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

// Client side of the same protocol. Budget enforcement lives on the server;
// error payloads map back onto the local exception types, and connection
// failures surface as TransportError.
class HttpOracleClient final : public LabelOracle {
 public:
  explicit HttpOracleClient(const std::string& base_url);
  ~HttpOracleClient() override;

  std::vector<int> query(const Matrix& batch) override;
  std::int64_t spent() const override;
  std::int64_t remaining() const override;
  std::size_t feature_count() const override;
  int class_count() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace exfilt
