#include <doctest.h>

#include <cmath>
#include <limits>

#include "exfilt/errors.hpp"
#include "exfilt/metrics.hpp"
#include "exfilt/rng.hpp"

using namespace exfilt;

namespace {

// O(n^2) Mann-Whitney statistic with half credit for ties; members score by
// boundary distance.
double pairwise_auc(const std::vector<double>& d, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (y[i] == 0) continue;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (d[i] > d[j])
        wins += 1.0;
      else if (d[i] == d[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

MlpClassifier tilt_model(double bias0) {
  MlpClassifier m;
  m.w1 = Matrix(1, 2);
  m.w1(0, 0) = 5.0;
  m.b1 = {0.0};
  m.w2 = Matrix(2, 1);
  m.w2(0, 0) = 3.0;
  m.b2 = {bias0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("fidelity: identity, counting, and symmetry") {
  const DatasetSchema schema = DatasetSchema::binary(2, 2);
  const TabularDataset data = synth_generate(schema, 200, 0.3, 12);
  const MlpClassifier a = tilt_model(0.4);
  const MlpClassifier b = tilt_model(-0.4);

  CHECK(fidelity(a, a, data) == 1.0);
  CHECK(fidelity(a, b, data) == fidelity(b, a, data));
  CHECK(fidelity(a, b, data) <= 1.0);

  TabularDataset empty;
  empty.schema = schema;
  empty.samples = Matrix(0, 2);
  CHECK_THROWS_AS(fidelity(a, b, empty), ConfigError);
}

TEST_CASE("fidelity counts exact agreement fractions") {
  // Two constant-ish models that disagree only where the first feature is set.
  MlpClassifier a = tilt_model(50.0);   // always class 0
  MlpClassifier b = tilt_model(-1.5);   // class depends on the input
  TabularDataset data;
  data.schema = DatasetSchema::binary(2, 2);
  data.samples = Matrix(4, 2);
  data.samples(1, 0) = 1.0;
  data.samples(2, 0) = 1.0;
  data.samples(3, 0) = 1.0;
  data.labels = {0, 0, 0, 0};
  const double f = fidelity(a, b, data);
  // b flips class only where 3 w2 tanh(5 x0) + b0 < 0: x0=0 -> b0=-1.5 -> class 1.
  CHECK(f == doctest::Approx(0.75));
}

TEST_CASE("attack accuracy examples") {
  CHECK(attack_accuracy({1, 0, 1, 1}, {1, 1, 1, 0}) == doctest::Approx(0.5));
  CHECK(attack_accuracy({1, 1}, {1, 1}) == 1.0);
  CHECK_THROWS_AS(attack_accuracy({1}, {1, 0}), ConfigError);
  CHECK_THROWS_AS(attack_accuracy({}, {}), ConfigError);
}

TEST_CASE("roc_auc: separations, ties, and degenerate truths") {
  // Members far from the boundary, non-members at it: perfect attack.
  CHECK(roc_auc({1.0, 1.0, 0.0, 0.0}, {1, 1, 0, 0}).auc == doctest::Approx(1.0));
  // Reversed distances: worst case.
  CHECK(roc_auc({0.0, 0.0, 1.0, 1.0}, {1, 1, 0, 0}).auc == doctest::Approx(0.0));
  // Identical distance distributions: exactly 0.5 under tie grouping.
  CHECK(roc_auc({0.7, 0.7, 0.7, 0.7}, {1, 0, 1, 0}).auc == doctest::Approx(0.5));
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), ConfigError);
}

TEST_CASE("roc endpoints are exactly (0,0) and (1,1) and tau descends") {
  Rng rng(5);
  std::vector<double> d;
  std::vector<int> y;
  for (int i = 0; i < 50; ++i) {
    d.push_back(rng.uniform(0, 2));
    y.push_back(static_cast<int>(rng.below(2)));
  }
  y[0] = 1;
  y[1] = 0;
  const RocResult roc = roc_auc(d, y);
  CHECK(roc.points.front().fpr == 0.0);
  CHECK(roc.points.front().tpr == 0.0);
  CHECK(roc.points.back().fpr == 1.0);
  CHECK(roc.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].tau <= roc.points[i - 1].tau);
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
  }
}

TEST_CASE("roc_auc equals the pairwise Mann-Whitney oracle, ties included") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> d(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid forces plenty of ties; occasional infinities.
      d[i] = rng.below(6) == 0 ? std::numeric_limits<double>::infinity()
                               : static_cast<double>(rng.below(8)) / 4.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 1;
    y[1] = 0;
    const double expect = pairwise_auc(d, y);
    CHECK(std::abs(roc_auc(d, y).auc - expect) <= 1e-12);
  }
}

TEST_CASE("attack accuracy at tau is recoverable from the ROC point") {
  Rng rng(15);
  std::vector<double> d;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(static_cast<int>(rng.below(2)));
    d.push_back(rng.uniform(0, 1) + 0.4 * y.back());
  }
  const double tau = 0.7;
  std::vector<int> pred;
  for (double v : d) pred.push_back(v >= tau ? 1 : 0);
  const double acc = attack_accuracy(pred, y);

  // Recompute TPR/FPR at tau directly.
  double tp = 0, fp = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (y[i] == 1) {
      pos += 1;
      if (d[i] >= tau) tp += 1;
    } else {
      neg += 1;
      if (d[i] >= tau) fp += 1;
    }
  }
  const double tpr = tp / pos, fpr = fp / neg;
  const double prior = pos / static_cast<double>(d.size());
  CHECK(acc == doctest::Approx(tpr * prior + (1.0 - fpr) * (1.0 - prior)).epsilon(1e-12));
}
