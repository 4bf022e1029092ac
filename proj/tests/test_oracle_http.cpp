#include <doctest.h>

#include <httplib.h>

#include "exfilt/dataset.hpp"
#include "exfilt/errors.hpp"
#include "exfilt/mlp.hpp"
#include "exfilt/oracle.hpp"
#include "exfilt/oracle_http.hpp"

using namespace exfilt;

namespace {

struct Fixture {
  Fixture(std::int64_t budget = kUnlimitedBudget, bool reject_invalid = false)
      : schema(DatasetSchema::binary(6, 3)),
        data(synth_generate(schema, 60, 0.5, 42)),
        model([&] {
          TrainConfig cfg;
          cfg.epochs = 15;
          cfg.batch_size = 16;
          cfg.hidden = 8;
          cfg.seed = 7;
          return train(data, cfg);
        }()),
        local(oracle_target(model), schema, budget, reject_invalid),
        served(oracle_target(model), schema, budget, reject_invalid),
        server(served, "127.0.0.1", 0) {}

  std::string url() const { return "http://127.0.0.1:" + std::to_string(server.port()); }

  DatasetSchema schema;
  TabularDataset data;
  MlpClassifier model;
  BudgetedOracle local;
  BudgetedOracle served;
  OracleServer server;
};

}  // namespace

TEST_CASE("remote and local oracles return identical labels") {
  Fixture fx;
  HttpOracleClient client(fx.url());
  CHECK(client.feature_count() == 6);
  CHECK(client.class_count() == 3);

  Matrix batch = fx.data.samples.take_rows({0, 1, 2, 3, 4, 5, 6, 7});
  const std::vector<int> remote = client.query(batch);
  const std::vector<int> direct = fx.local.query(batch);
  CHECK(remote == direct);
  CHECK(client.spent() == 8);
}

TEST_CASE("server-side budget exhaustion maps to BudgetExhaustedError") {
  Fixture fx(/*budget=*/5);
  HttpOracleClient client(fx.url());
  Matrix batch = fx.data.samples.take_rows({0, 1, 2});
  client.query(batch);
  CHECK(client.remaining() == 2);
  CHECK_THROWS_AS(client.query(batch), BudgetExhaustedError);
  CHECK(fx.served.spent() == 3);  // refused batch charged nothing
}

TEST_CASE("invalid queries map to InvalidQueryError when the server rejects them") {
  Fixture fx(kUnlimitedBudget, /*reject_invalid=*/true);
  HttpOracleClient client(fx.url());
  Matrix batch(1, 6);
  batch(0, 0) = 0.25;
  CHECK_THROWS_AS(client.query(batch), InvalidQueryError);
  CHECK(fx.served.spent() == 0);
}

TEST_CASE("malformed bodies get a 400 and charge nothing") {
  Fixture fx(/*budget=*/10);
  httplib::Client raw(fx.url());

  auto not_json = raw.Post("/v1/predict", "this is not json", "application/json");
  REQUIRE(not_json);
  CHECK(not_json->status == 400);

  auto wrong_shape = raw.Post("/v1/predict", R"({"samples": [[1, 0]]})", "application/json");
  REQUIRE(wrong_shape);
  CHECK(wrong_shape->status == 400);

  auto missing_key = raw.Post("/v1/predict", R"({"rows": []})", "application/json");
  REQUIRE(missing_key);
  CHECK(missing_key->status == 400);

  CHECK(fx.served.spent() == 0);

  auto status = raw.Get("/v1/status");
  REQUIRE(status);
  CHECK(status->status == 200);
  CHECK(status->body.find("\"remaining\":10") != std::string::npos);
}

TEST_CASE("connection failures surface as TransportError, not budget errors") {
  CHECK_THROWS_AS(HttpOracleClient("http://127.0.0.1:1"), TransportError);
}
