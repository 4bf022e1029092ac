#pragma once

#include <cstdint>

namespace exfilt {

// Renyi-DP order grid used by the accountant.
inline constexpr int kRdpMinOrder = 2;
inline constexpr int kRdpMaxOrder = 64;

// RDP of one subsampled-Gaussian step at integer order alpha (moment bound).
double rdp_subsampled_gaussian(double noise_multiplier, double sample_rate, int alpha);

// (epsilon, delta) after `steps` compositions: min over integer orders of
// steps * RDP(alpha) + ln(1/delta) / (alpha - 1).
double dp_epsilon(double noise_multiplier, double sample_rate, std::int64_t steps,
                  double delta);

// Invert dp_epsilon over noise_multiplier in [0.05, 100] by bisection; the
// returned sigma satisfies epsilon <= target within 1% relative tolerance.
double solve_sigma_for_epsilon(double target_epsilon, double sample_rate,
                               std::int64_t steps, double delta);

}  // namespace exfilt
