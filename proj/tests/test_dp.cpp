#include <doctest.h>

#include <cmath>

#include "exfilt/dp_accountant.hpp"
#include "exfilt/errors.hpp"

using namespace exfilt;

TEST_CASE("full-batch single-step accountant matches the closed-form grid minimum") {
  // q = 1: RDP(alpha) = alpha / (2 sigma^2); minimize alpha/2 + ln(1e5)/(alpha-1).
  const double eps = dp_epsilon(1.0, 1.0, 1, 1e-5);
  double expect = 1e300;
  for (int alpha = kRdpMinOrder; alpha <= kRdpMaxOrder; ++alpha)
    expect = std::min(expect, alpha / 2.0 + std::log(1e5) / (alpha - 1.0));
  CHECK(eps == doctest::Approx(expect).epsilon(1e-12));
  CHECK(eps == doctest::Approx(5.3).epsilon(0.02));
}

TEST_CASE("rdp reduces to the plain Gaussian bound at q = 1") {
  for (int alpha : {2, 8, 32}) {
    CHECK(rdp_subsampled_gaussian(2.0, 1.0, alpha) ==
          doctest::Approx(alpha / (2.0 * 4.0)).epsilon(1e-12));
  }
}

TEST_CASE("subsampling shrinks the per-step cost") {
  const double full = rdp_subsampled_gaussian(1.0, 1.0, 8);
  const double sub = rdp_subsampled_gaussian(1.0, 0.01, 8);
  CHECK(sub < full);
  CHECK(sub >= 0.0);
}

TEST_CASE("epsilon is monotone in sigma, steps, sampling rate, and delta") {
  const double base = dp_epsilon(1.0, 0.1, 100, 1e-5);
  CHECK(dp_epsilon(2.0, 0.1, 100, 1e-5) <= base);       // more noise
  CHECK(dp_epsilon(1.0, 0.1, 200, 1e-5) >= base);       // more steps
  CHECK(dp_epsilon(1.0, 0.2, 100, 1e-5) >= base);       // more data per step
  CHECK(dp_epsilon(1.0, 0.1, 100, 1e-7) >= base);       // stricter delta
}

TEST_CASE("sigma solver round-trips within one percent") {
  for (double target : {2.0, 20.0, 50.0}) {
    const double sigma = solve_sigma_for_epsilon(target, 0.0625, 3200, 1e-5);
    const double eps = dp_epsilon(sigma, 0.0625, 3200, 1e-5);
    CHECK(eps <= target * (1.0 + 1e-9));
    CHECK(eps >= target * 0.99);
  }
}

TEST_CASE("larger epsilon targets need less noise") {
  const double strict = solve_sigma_for_epsilon(20.0, 0.0625, 3200, 1e-5);
  const double loose = solve_sigma_for_epsilon(200.0, 0.0625, 3200, 1e-5);
  CHECK(strict > loose);
}

TEST_CASE("accountant validates inputs and the solver bracket") {
  CHECK_THROWS_AS(dp_epsilon(0.0, 0.5, 10, 1e-5), ConfigError);
  CHECK_THROWS_AS(dp_epsilon(1.0, 0.0, 10, 1e-5), ConfigError);
  CHECK_THROWS_AS(dp_epsilon(1.0, 0.5, 0, 1e-5), ConfigError);
  CHECK_THROWS_AS(dp_epsilon(1.0, 0.5, 10, 2.0), ConfigError);
  // A target no sigma in [0.05, 100] can reach.
  CHECK_THROWS_AS(solve_sigma_for_epsilon(1e-9, 1.0, 100000, 1e-5), ConfigError);
}
