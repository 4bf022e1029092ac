#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "exfilt/matrix.hpp"
#include "exfilt/schema.hpp"

namespace exfilt {

inline constexpr std::int64_t kUnlimitedBudget = -1;

// Label-only prediction boundary around a target model. Implementations
// release hard class labels only; probabilities never cross this interface.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::vector<int> query(const Matrix& batch) = 0;
  virtual std::int64_t spent() const = 0;
  virtual std::int64_t remaining() const = 0;  // kUnlimitedBudget when unbounded
  virtual std::size_t feature_count() const = 0;
  virtual int class_count() const = 0;
};

// In-process oracle with atomic all-or-nothing budget charging. Every
// submitted sample is charged, duplicates included; deduplication is the
// caller's concern.
class BudgetedOracle final : public LabelOracle {
 public:
  using TargetFn = std::function<std::vector<int>(const Matrix&)>;

  BudgetedOracle(TargetFn target, DatasetSchema schema,
                 std::int64_t budget = kUnlimitedBudget, bool reject_invalid = false,
                 bool keep_query_log = false);

  std::vector<int> query(const Matrix& batch) override;
  std::int64_t spent() const override;
  std::int64_t remaining() const override;
  std::size_t feature_count() const override { return schema_.feature_count(); }
  int class_count() const override { return schema_.n_classes; }

  const std::vector<std::pair<std::uint64_t, int>>& query_log() const { return log_; }

 private:
  TargetFn target_;
  DatasetSchema schema_;
  std::int64_t budget_;
  bool reject_invalid_;
  bool keep_log_;
  mutable std::mutex mu_;
  std::int64_t spent_ = 0;
  std::vector<std::pair<std::uint64_t, int>> log_;
};

// Convenience: oracle over a trained classifier.
BudgetedOracle::TargetFn oracle_target(const struct MlpClassifier& model);

}  // namespace exfilt
