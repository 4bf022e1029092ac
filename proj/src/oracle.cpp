#include "exfilt/oracle.hpp"

#include <string>

#include "exfilt/errors.hpp"
#include "exfilt/mlp.hpp"
#include "exfilt/rng.hpp"

namespace exfilt {

BudgetedOracle::BudgetedOracle(TargetFn target, DatasetSchema schema,
                               std::int64_t budget, bool reject_invalid,
                               bool keep_query_log)
    : target_(std::move(target)),
      schema_(std::move(schema)),
      budget_(budget),
      reject_invalid_(reject_invalid),
      keep_log_(keep_query_log) {
  schema_.validate();
  if (budget_ != kUnlimitedBudget && budget_ < 0)
    throw ConfigError("oracle: budget must be non-negative or unlimited");
}

std::vector<int> BudgetedOracle::query(const Matrix& batch) {
  if (batch.rows() == 0) throw ConfigError("oracle: empty batch");
  if (batch.cols() != schema_.feature_count())
    throw SchemaError("oracle: sample width does not match schema");

  std::lock_guard<std::mutex> lock(mu_);
  if (reject_invalid_) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < batch.rows(); ++i)
      if (!row_in_domain(batch.row_span(i), schema_)) bad.push_back(i);
    if (!bad.empty())
      throw InvalidQueryError(
          "oracle: " + std::to_string(bad.size()) + " sample(s) outside the schema domain",
          std::move(bad));
  }
  const std::int64_t n = static_cast<std::int64_t>(batch.rows());
  if (budget_ != kUnlimitedBudget && spent_ + n > budget_)
    throw BudgetExhaustedError("oracle: batch of " + std::to_string(n) +
                               " exceeds remaining budget " +
                               std::to_string(budget_ - spent_));

  std::vector<int> labels = target_(batch);
  if (labels.size() != batch.rows())
    throw Error("oracle: target returned wrong label count");
  spent_ += n;
  if (keep_log_)
    for (std::size_t i = 0; i < batch.rows(); ++i)
      log_.emplace_back(fingerprint_row(batch.row(i), batch.cols()), labels[i]);
  return labels;
}

std::int64_t BudgetedOracle::spent() const {
  std::lock_guard<std::mutex> lock(mu_);
  return spent_;
}

std::int64_t BudgetedOracle::remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return budget_ == kUnlimitedBudget ? kUnlimitedBudget : budget_ - spent_;
}

BudgetedOracle::TargetFn oracle_target(const MlpClassifier& model) {
  return [model](const Matrix& batch) { return model.predict(batch); };
}

}  // namespace exfilt
