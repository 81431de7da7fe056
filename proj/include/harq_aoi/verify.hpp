#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/env.hpp"
#include "harq_aoi/rng.hpp"

namespace harq_aoi {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed error
  std::size_t samples = 0;
  std::string detail;
};

/// A random valid configuration with 1..max_sources sources and small caps.
SystemConfig random_config(Rng& rng, int max_sources = 4);
/// A random state satisfying fresh_age <= proc_age <= aoi <= aoi_cap.
SystemState random_state(const SystemConfig& cfg, Rng& rng);

/// Closed-form first and second moments of the next average AoI against
/// the enumerated transition kernel.
CheckResult check_aoi_moments(std::size_t pairs, std::uint64_t seed, double tol = 1e-10);
/// dpp_objective against V 1[tx] + (D^2 + E2 + 2Q (E1 - D)) / 2.
CheckResult check_dpp_objective(std::size_t pairs, std::uint64_t seed, double tol = 1e-10);
/// Every kernel sums to one.
CheckResult check_kernel_normalization(std::size_t pairs, std::uint64_t seed, double tol = 1e-12);
/// Backpropagated TD-loss gradient against central finite differences.
CheckResult check_td_gradient(std::uint64_t seed, double tol = 1e-4);

std::vector<CheckResult> run_verification(std::uint64_t seed);

}  // namespace harq_aoi
