#include "exfilt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "exfilt/errors.hpp"

namespace exfilt {

double fidelity(const MlpClassifier& a, const MlpClassifier& b, const TabularDataset& d_n) {
  if (d_n.size() == 0) throw ConfigError("fidelity: empty evaluation set");
  const std::vector<int> pa = a.predict(d_n.samples);
  const std::vector<int> pb = b.predict(d_n.samples);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i] == pb[i]) ++agree;
  return static_cast<double>(agree) / static_cast<double>(pa.size());
}

double accuracy(const MlpClassifier& model, const TabularDataset& data) {
  if (data.size() == 0) throw ConfigError("accuracy: empty evaluation set");
  const std::vector<int> pred = model.predict(data.samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double attack_accuracy(const std::vector<int>& predictions, const std::vector<int>& truths) {
  if (predictions.size() != truths.size())
    throw ConfigError("attack_accuracy: prediction/truth length mismatch");
  if (predictions.empty()) throw ConfigError("attack_accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == truths[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

RocResult roc_auc(const std::vector<double>& distances, const std::vector<int>& truths) {
  if (distances.size() != truths.size())
    throw ConfigError("roc_auc: distance/truth length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int t : truths) (t != 0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("roc_auc: need at least one member and one non-member");

  // Distances descending; the threshold sweep admits the most member-like
  // (largest, with +inf first) scores first.
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return distances[a] > distances[b];
  });

  RocResult out;
  out.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double auc = 0.0;
  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    // One step per group of tied distances.
    const double tau = distances[order[i]];
    std::size_t j = i;
    while (j < order.size() && distances[order[j]] == tau) {
      if (truths[order[j]] != 0)
        ++tp;
      else
        ++fp;
      ++j;
    }
    i = j;
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    out.points.push_back({fpr, tpr, tau});
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  // Guaranteed by the full sweep; kept exact for report consumers.
  out.points.back().fpr = 1.0;
  out.points.back().tpr = 1.0;
  out.auc = auc;
  return out;
}

}  // namespace exfilt
