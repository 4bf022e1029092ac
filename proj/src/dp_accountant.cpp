#include "exfilt/dp_accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "exfilt/errors.hpp"

namespace exfilt {

namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& terms) {
  double max_t = -std::numeric_limits<double>::infinity();
  for (double t : terms) max_t = std::max(max_t, t);
  if (!std::isfinite(max_t)) return max_t;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - max_t);
  return max_t + std::log(s);
}

void check_inputs(double sigma, double q, std::int64_t steps, double delta) {
  if (sigma <= 0.0) throw ConfigError("accountant: noise multiplier must be positive");
  if (q <= 0.0 || q > 1.0) throw ConfigError("accountant: sample rate must lie in (0, 1]");
  if (steps < 1) throw ConfigError("accountant: steps must be at least 1");
  if (delta <= 0.0 || delta >= 1.0) throw ConfigError("accountant: delta must lie in (0, 1)");
}

}  // namespace

double rdp_subsampled_gaussian(double noise_multiplier, double sample_rate, int alpha) {
  if (alpha < 2) throw ConfigError("accountant: order must be >= 2");
  const double sigma2 = noise_multiplier * noise_multiplier;
  if (sample_rate >= 1.0) {
    // Plain Gaussian mechanism.
    return static_cast<double>(alpha) / (2.0 * sigma2);
  }
  const double log_q = std::log(sample_rate);
  const double log_1mq = std::log1p(-sample_rate);
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  for (int k = 0; k <= alpha; ++k) {
    const double t = log_binomial(alpha, k) + (alpha - k) * log_1mq + k * log_q +
                     (static_cast<double>(k) * k - k) / (2.0 * sigma2);
    terms.push_back(t);
  }
  const double lse = log_sum_exp(terms);
  return std::max(0.0, lse / (alpha - 1.0));
}

double dp_epsilon(double noise_multiplier, double sample_rate, std::int64_t steps,
                  double delta) {
  check_inputs(noise_multiplier, sample_rate, steps, delta);
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  for (int alpha = kRdpMinOrder; alpha <= kRdpMaxOrder; ++alpha) {
    const double rdp = rdp_subsampled_gaussian(noise_multiplier, sample_rate, alpha);
    const double eps = steps * rdp + log_inv_delta / (alpha - 1.0);
    best = std::min(best, eps);
  }
  return best;
}

double solve_sigma_for_epsilon(double target_epsilon, double sample_rate,
                               std::int64_t steps, double delta) {
  if (target_epsilon <= 0.0)
    throw ConfigError("accountant: target epsilon must be positive");
  double lo = 0.05, hi = 100.0;
  const double eps_lo = dp_epsilon(lo, sample_rate, steps, delta);
  const double eps_hi = dp_epsilon(hi, sample_rate, steps, delta);
  if (eps_lo < target_epsilon || eps_hi > target_epsilon)
    throw ConfigError("accountant: target epsilon " + std::to_string(target_epsilon) +
                      " is outside the sigma bracket [0.05, 100]: eps(0.05)=" +
                      std::to_string(eps_lo) + ", eps(100)=" + std::to_string(eps_hi));
  // Epsilon decreases in sigma; keep eps(hi) <= target at all times.
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double eps_mid = dp_epsilon(mid, sample_rate, steps, delta);
    if (eps_mid > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
      if (eps_mid >= 0.99 * target_epsilon) break;
    }
  }
  return hi;
}

}  // namespace exfilt
