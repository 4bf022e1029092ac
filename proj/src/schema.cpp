#include "exfilt/schema.hpp"

#include <algorithm>
#include <cmath>

#include "exfilt/errors.hpp"

namespace exfilt {

bool FeatureDomain::contains(double v) const {
  if (!std::isfinite(v)) return false;
  switch (kind) {
    case DomainKind::kBinary:
      return v == 0.0 || v == 1.0;
    case DomainKind::kCategorical:
      return v >= 0.0 && v <= hi && v == std::floor(v);
    case DomainKind::kContinuous:
      return v >= lo && v <= hi;
  }
  return false;
}

double FeatureDomain::clamp(double v) const {
  if (kind == DomainKind::kContinuous) return std::min(std::max(v, lo), hi);
  // Integer-valued: round half away from zero, then clip.
  double r = std::round(v);
  return std::min(std::max(r, lo), hi);
}

bool DatasetSchema::all_binary() const {
  return std::all_of(features.begin(), features.end(), [](const FeatureDomain& d) {
    return d.kind == DomainKind::kBinary;
  });
}

void DatasetSchema::validate() const {
  if (n_classes <= 0) throw SchemaError("schema: class count must be positive");
  if (features.empty()) throw SchemaError("schema: feature count must be positive");
  for (std::size_t j = 0; j < features.size(); ++j) {
    const FeatureDomain& d = features[j];
    if (d.kind == DomainKind::kCategorical && d.hi < 1.0)
      throw SchemaError("schema: categorical feature " + std::to_string(j) +
                        " needs a max value of at least 1");
    if (d.kind == DomainKind::kContinuous && d.lo > d.hi)
      throw SchemaError("schema: continuous feature " + std::to_string(j) +
                        " has an empty range");
  }
}

DatasetSchema DatasetSchema::binary(std::size_t n_features, int n_classes) {
  DatasetSchema s;
  s.features.assign(n_features, FeatureDomain::binary());
  s.n_classes = n_classes;
  return s;
}

void clamp_to_domain(std::span<double> row, const DatasetSchema& schema) {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = schema.features[j].clamp(row[j]);
}

std::vector<double> clamped(std::span<const double> row, const DatasetSchema& schema) {
  std::vector<double> out(row.begin(), row.end());
  clamp_to_domain(out, schema);
  return out;
}

bool row_in_domain(std::span<const double> row, const DatasetSchema& schema) {
  if (row.size() != schema.feature_count()) return false;
  for (std::size_t j = 0; j < row.size(); ++j)
    if (!schema.features[j].contains(row[j])) return false;
  return true;
}

}  // namespace exfilt
