#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace exfilt {

enum class DomainKind { kBinary, kCategorical, kContinuous };

// Value domain of one feature: {0,1}, {0..max}, or [lo, hi].
struct FeatureDomain {
  DomainKind kind = DomainKind::kBinary;
  double lo = 0.0;
  double hi = 1.0;

  static FeatureDomain binary() { return {DomainKind::kBinary, 0.0, 1.0}; }
  static FeatureDomain categorical(int max_value) {
    return {DomainKind::kCategorical, 0.0, static_cast<double>(max_value)};
  }
  static FeatureDomain continuous(double lo, double hi) {
    return {DomainKind::kContinuous, lo, hi};
  }

  bool is_integer_valued() const { return kind != DomainKind::kContinuous; }
  bool contains(double v) const;
  double clamp(double v) const;
};

struct DatasetSchema {
  std::vector<FeatureDomain> features;
  int n_classes = 0;

  std::size_t feature_count() const { return features.size(); }
  bool all_binary() const;
  bool label_in_range(int label) const { return label >= 0 && label < n_classes; }
  void validate() const;

  static DatasetSchema binary(std::size_t n_features, int n_classes);
};

// Project every feature into its domain. Continuous values are clipped;
// integer-valued features are rounded to the nearest valid value then clipped.
void clamp_to_domain(std::span<double> row, const DatasetSchema& schema);
std::vector<double> clamped(std::span<const double> row, const DatasetSchema& schema);

bool row_in_domain(std::span<const double> row, const DatasetSchema& schema);

}  // namespace exfilt
