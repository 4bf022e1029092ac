#include <doctest.h>

#include <algorithm>

#include "exfilt/errors.hpp"
#include "exfilt/kmeans.hpp"
#include "exfilt/rng.hpp"

using namespace exfilt;

TEST_CASE("two well-separated pairs recover their exact centers") {
  Matrix pts(4, 2);
  pts(0, 0) = 0;  pts(0, 1) = 0;
  pts(1, 0) = 0;  pts(1, 1) = 1;
  pts(2, 0) = 10; pts(2, 1) = 10;
  pts(3, 0) = 10; pts(3, 1) = 11;

  const KmeansResult result = kmeans(pts, 2, 5);
  // Order-insensitive comparison.
  std::vector<std::pair<double, double>> centers;
  for (std::size_t c = 0; c < 2; ++c)
    centers.emplace_back(result.centers(c, 0), result.centers(c, 1));
  std::sort(centers.begin(), centers.end());
  CHECK(centers[0].first == doctest::Approx(0.0));
  CHECK(centers[0].second == doctest::Approx(0.5));
  CHECK(centers[1].first == doctest::Approx(10.0));
  CHECK(centers[1].second == doctest::Approx(10.5));
  CHECK(result.assignment[0] == result.assignment[1]);
  CHECK(result.assignment[2] == result.assignment[3]);
  CHECK(result.assignment[0] != result.assignment[2]);
}

TEST_CASE("objective never increases across iterations") {
  Rng rng(3);
  Matrix pts(200, 5);
  for (std::size_t i = 0; i < pts.rows(); ++i)
    for (std::size_t j = 0; j < 5; ++j) pts(i, j) = rng.uniform(-2, 2);
  const KmeansResult result = kmeans(pts, 7, 11);
  REQUIRE(result.objective_trace.size() >= 1);
  for (std::size_t i = 1; i < result.objective_trace.size(); ++i)
    CHECK(result.objective_trace[i] <= result.objective_trace[i - 1] + 1e-9);
}

TEST_CASE("k = 1 gives the global mean") {
  Matrix pts(3, 1);
  pts(0, 0) = 1;
  pts(1, 0) = 2;
  pts(2, 0) = 6;
  const KmeansResult result = kmeans(pts, 1, 9);
  CHECK(result.centers(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("identical points collapse into one center deterministically") {
  Matrix pts(6, 3, 0.5);
  const KmeansResult a = kmeans(pts, 2, 1);
  const KmeansResult b = kmeans(pts, 2, 1);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centers == b.centers);
}

TEST_CASE("seeding is deterministic and seed-sensitive") {
  Rng rng(8);
  Matrix pts(50, 3);
  for (std::size_t i = 0; i < pts.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) pts(i, j) = rng.uniform(0, 1);
  const KmeansResult a = kmeans(pts, 5, 123);
  const KmeansResult b = kmeans(pts, 5, 123);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centers == b.centers);
}

TEST_CASE("invalid cluster counts are rejected") {
  Matrix pts(3, 2);
  CHECK_THROWS_AS(kmeans(pts, 0, 1), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 4, 1), ConfigError);
}
