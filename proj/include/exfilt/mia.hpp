#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "exfilt/dataset.hpp"
#include "exfilt/mlp.hpp"

namespace exfilt {

enum class BoundaryMethod { kExhaustive, kWhiteboxMargin, kLabelOnlyHsj };

BoundaryMethod boundary_method_from_string(const std::string& s);
std::string to_string(BoundaryMethod m);

struct BoundaryEstimatorConfig {
  BoundaryMethod method = BoundaryMethod::kLabelOnlyHsj;
  int max_model_evals = 5000;   // per sample
  int init_trials = 100;        // random restarts for the decision-based search
  double binsearch_tol = 1e-3;
  int grad_samples = 50;        // probes per normal-vector estimate
  bool integer_constrained = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Sentinel for "no label change found within the eval budget".
inline constexpr double kNoBoundary = std::numeric_limits<double>::infinity();

// L2 norm of a perturbation that changes the model's label on x.
//   exhaustive      exact minimum over all bit-flip masks (binary, n_j <= 20)
//   whitebox_margin first-order descent on the top-2 logit margin + tightening
//   labelonly_hsj   decision-based search from random misclassified points
// The label-only and white-box estimators are upper bounds on the minimum.
// With integer_constrained, candidates are rounded to valid categorical values
// before every label check and the reported point lies on the integer grid.
double boundary_distance(const MlpClassifier& model, std::span<const double> x,
                         const DatasetSchema& schema, const BoundaryEstimatorConfig& config);

struct MiaThreshold {
  enum class Source { kCalibrated, kManual };
  double tau = 0.0;
  std::size_t calibration_size = 0;
  std::vector<double> calibration_distances;
  Source source = Source::kManual;
};

// Unsupervised calibration: boundary distances of random in-domain samples
// (binary features ~ Bernoulli(activation rate of `reference` when given,
// else 0.5)), excluding anything the attacker already holds; tau is the
// maximum finite distance.
MiaThreshold calibrate_threshold(const MlpClassifier& model, const DatasetSchema& schema,
                                 std::size_t n_cal, const BoundaryEstimatorConfig& config,
                                 std::uint64_t seed,
                                 const TabularDataset* reference = nullptr,
                                 const std::unordered_set<std::uint64_t>* exclude = nullptr);

struct MiaResult {
  std::vector<int> predicted;    // 1 = member
  std::vector<double> distances;
};

// Distance-threshold membership rule: samples at or beyond tau (boundary
// distance >= tau, i.e. robust predictions) are declared members. Runs
// entirely against the supplied model; no oracle is involved.
MiaResult infer_membership(const MlpClassifier& model, const TabularDataset& d_mem,
                           const MiaThreshold& threshold,
                           const BoundaryEstimatorConfig& config);

void write_mia_csv(const std::string& path, const TabularDataset& d_mem,
                   const MiaResult& result);
void write_threshold_sidecar(const std::string& path, const MiaThreshold& threshold,
                             const BoundaryEstimatorConfig& config);

}  // namespace exfilt
