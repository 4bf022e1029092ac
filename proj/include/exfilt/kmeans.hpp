#pragma once

#include <cstdint>
#include <vector>

#include "exfilt/matrix.hpp"

namespace exfilt {

struct KmeansResult {
  Matrix centers;               // k x dim
  std::vector<int> assignment;  // per point, nearest-center index
  std::vector<double> objective_trace;  // sum of squared distances per iteration
  int iterations = 0;
};

// Deterministic Lloyd iteration with k-means++ seeding. Converges when the
// assignment stabilizes or after max_iter rounds; distance ties resolve to the
// lowest center index, seeding ties to the lowest point index.
KmeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter = 100);

}  // namespace exfilt
