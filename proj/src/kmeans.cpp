#include "exfilt/kmeans.hpp"

#include <limits>

#include "exfilt/errors.hpp"
#include "exfilt/rng.hpp"

namespace exfilt {

namespace {

int nearest_center(const Matrix& centers, std::span<const double> p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(centers.row_span(c), p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

KmeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter) {
  const std::size_t n = points.rows();
  if (k <= 0) throw ConfigError("kmeans: k must be positive");
  if (n < static_cast<std::size_t>(k))
    throw ConfigError("kmeans: fewer points than clusters");

  Rng rng(derive_seed(seed, "kmeans"));
  const std::size_t dim = points.cols();
  Matrix centers(static_cast<std::size_t>(k), dim);

  // k-means++ seeding on squared distances.
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  const std::size_t first = static_cast<std::size_t>(rng.below(n));
  centers.set_row(0, points.row_span(first));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(centers.row_span(c - 1), points.row_span(i));
      if (d < dist2[i]) dist2[i] = d;
      total += dist2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.next_unit() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > r) {
          pick = i;
          break;
        }
      }
    }
    // total == 0: every point coincides with a center; lowest index wins.
    centers.set_row(c, points.row_span(pick));
  }

  KmeansResult result;
  result.assignment.assign(n, -1);
  std::vector<int> next(n, -1);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<std::size_t> counts(k);

  for (int iter = 0; iter < max_iter; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = nearest_center(centers, points.row_span(i));
      objective += squared_distance(centers.row_span(next[i]), points.row_span(i));
    }
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (next == result.assignment) break;
    result.assignment = next;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<std::size_t>(next[i]) * dim;
      const double* p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      counts[next[i]] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      double* dst = centers.row(c);
      const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  result.centers = std::move(centers);
  return result;
}

}  // namespace exfilt
