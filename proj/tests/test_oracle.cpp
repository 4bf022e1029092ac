#include <doctest.h>

#include <atomic>
#include <thread>

#include "exfilt/errors.hpp"
#include "exfilt/oracle.hpp"
#include "exfilt/rng.hpp"

using namespace exfilt;

namespace {

BudgetedOracle::TargetFn first_bit_target() {
  return [](const Matrix& batch) {
    std::vector<int> labels(batch.rows());
    for (std::size_t i = 0; i < batch.rows(); ++i)
      labels[i] = batch(i, 0) > 0.5 ? 1 : 0;
    return labels;
  };
}

Matrix ones_batch(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols, 1.0);
  return m;
}

}  // namespace

TEST_CASE("budget arithmetic: exact charge, atomic refusal once exhausted") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), 10);
  CHECK(oracle.remaining() == 10);
  const std::vector<int> labels = oracle.query(ones_batch(10, 4));
  CHECK(labels.size() == 10);
  CHECK(oracle.spent() == 10);
  CHECK(oracle.remaining() == 0);
  CHECK_THROWS_AS(oracle.query(ones_batch(1, 4)), BudgetExhaustedError);
  CHECK(oracle.spent() == 10);  // refusal charges nothing
}

TEST_CASE("partial batches are refused atomically") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), 7);
  oracle.query(ones_batch(4, 4));
  CHECK_THROWS_AS(oracle.query(ones_batch(4, 4)), BudgetExhaustedError);
  CHECK(oracle.spent() == 4);  // all-or-nothing
  oracle.query(ones_batch(3, 4));
  CHECK(oracle.remaining() == 0);
}

TEST_CASE("duplicates are charged; the oracle never deduplicates") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), 10);
  const Matrix same = ones_batch(1, 4);
  oracle.query(same);
  oracle.query(same);
  CHECK(oracle.spent() == 2);
}

TEST_CASE("unlimited oracles report the sentinel forever") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2));
  CHECK(oracle.remaining() == kUnlimitedBudget);
  oracle.query(ones_batch(40, 4));
  CHECK(oracle.remaining() == kUnlimitedBudget);
  CHECK(oracle.spent() == 40);
}

TEST_CASE("reject_invalid blocks out-of-domain samples without charging") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), 10,
                        /*reject_invalid=*/true);
  Matrix bad = ones_batch(2, 4);
  bad(1, 2) = 0.5;
  CHECK_THROWS_AS(oracle.query(bad), InvalidQueryError);
  try {
    oracle.query(bad);
  } catch (const InvalidQueryError& e) {
    REQUIRE(e.rows.size() == 1);
    CHECK(e.rows[0] == 1);
  }
  CHECK(oracle.spent() == 0);
  oracle.query(ones_batch(2, 4));  // valid rows still pass
  CHECK(oracle.spent() == 2);
}

TEST_CASE("label-only interface returns hard labels in class range") {
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), 100, false, true);
  Matrix batch(3, 4);
  batch(0, 0) = 1.0;
  const std::vector<int> labels = oracle.query(batch);
  CHECK(labels == std::vector<int>{1, 0, 0});
  CHECK(oracle.query_log().size() == 3);
}

TEST_CASE("concurrent querying never oversubscribes the budget") {
  constexpr std::int64_t kBudget = 1000;
  BudgetedOracle oracle(first_bit_target(), DatasetSchema::binary(4, 2), kBudget);
  std::atomic<std::int64_t> released{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 8; ++w) {
    workers.emplace_back([&oracle, &released, w] {
      Rng rng(static_cast<std::uint64_t>(w));
      for (int i = 0; i < 400; ++i) {
        const std::size_t rows = 1 + rng.below(7);
        try {
          const std::vector<int> labels = oracle.query(ones_batch(rows, 4));
          released += static_cast<std::int64_t>(labels.size());
        } catch (const BudgetExhaustedError&) {
          // Expected near the end.
        }
      }
    });
  }
  for (std::thread& t : workers) t.join();
  CHECK(oracle.spent() <= kBudget);
  CHECK(oracle.spent() == released.load());
}
