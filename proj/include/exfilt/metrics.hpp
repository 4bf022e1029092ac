#pragma once

#include <vector>

#include "exfilt/dataset.hpp"
#include "exfilt/mlp.hpp"

namespace exfilt {

// Fraction of rows on which the two models predict the same label.
double fidelity(const MlpClassifier& a, const MlpClassifier& b, const TabularDataset& d_n);

// Fraction of rows the model labels correctly.
double accuracy(const MlpClassifier& model, const TabularDataset& data);

// Mean of indicator(prediction == truth).
double attack_accuracy(const std::vector<int>& predictions, const std::vector<int>& truths);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double tau = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // tau descending, (0,0) first, (1,1) last
};

// ROC over the boundary-distance membership score (larger distance = more
// member-like; +inf sentinels rank above every finite distance). Sweeps the
// threshold "member iff distance >= tau" across the distinct distances,
// grouping ties, and integrates TPR over FPR with the trapezoid rule, which
// matches the Mann-Whitney statistic with half-credit ties exactly.
RocResult roc_auc(const std::vector<double>& distances, const std::vector<int>& truths);

}  // namespace exfilt
