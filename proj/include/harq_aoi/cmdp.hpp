#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/env.hpp"
#include "harq_aoi/state_space.hpp"

namespace harq_aoi {

/// L(s, a, beta) = 1[a transmits] + beta * avg_aoi(s).
double lagrangian_cost(const SystemState& s, const Action& a, double beta);

struct RviaOptions {
  double tolerance = 0.01;
  int max_iterations = 100000;
  double aperiodicity = 1.0;
};

struct RviaResult {
  std::vector<double> relative_value;  // h
  std::vector<double> value;           // v
  std::vector<std::uint16_t> policy;   // action code per state
  double gain = 0.0;                   // v(s_ref), the optimal average Lagrangian
  int iterations = 0;
  double last_change = 0.0;            // max_s |h^i - h^{i-1}| at exit
};

/// Relative value iteration for a fixed multiplier. Synchronous sweeps:
/// v^i(s) = min_a [L(s,a,beta) + sum_s' P(s'|s,a) h^{i-1}(s')],
/// h^i = v^i - v^i(s_ref), starting from h^0 = 1, h^1 = 0. Stops when
/// max |h^i - h^{i-1}| < tolerance; the policy is the argmin against the
/// final h with ties resolved by action code. Throws ConvergenceError when
/// max_iterations is reached first.
RviaResult rvia(const StateSpace& space, double beta, const RviaOptions& options = {});

enum class EvalMode { exact, monte_carlo };
std::string to_string(EvalMode mode);

struct EvalOptions {
  double stationary_tol = 1e-10;
  int max_iterations = 2'000'000;
  std::size_t direct_solve_max_states = 20'000;
  std::uint64_t horizon = 1'000'000;
  std::uint64_t seed = 20240101;
  int batches = 20;
};

/// Long-run averages of a deterministic policy started from the all-zero
/// state. Confidence halfwidths are zero for exact evaluations.
struct PolicyEvaluation {
  double tau_bar = 0.0;
  double delta_bar = 0.0;
  double tau_ci = 0.0;
  double delta_ci = 0.0;
  EvalMode mode = EvalMode::exact;
  std::size_t reachable_states = 0;
  std::uint64_t horizon = 0;
  std::uint64_t seed = 0;
};

/// exact: stationary distribution of the chain induced on the states
/// reachable from s_0 (sparse LU below direct_solve_max_states, otherwise
/// power iteration on the lazy chain (I + P) / 2, which has the same
/// long-run averages). monte_carlo: one sample path of `horizon` slots with
/// batch-means 95% halfwidths.
PolicyEvaluation evaluate_policy(const StateSpace& space, std::span<const std::uint16_t> policy, EvalMode mode,
                                 const EvalOptions& options = {});

struct DeterministicPolicy {
  double beta = 0.0;
  std::vector<std::uint16_t> actions;  // action code per state index
  double gain = 0.0;
  PolicyEvaluation evaluation;
};

struct BisectionStep {
  double beta = 0.0;
  double gain = 0.0;
  double tau_bar = 0.0;
  double delta_bar = 0.0;
  bool feasible = false;
  int rvia_iterations = 0;
};

struct SolvedPolicies {
  double beta_tilde = 0.0;
  double beta_lower = 0.0;
  DeterministicPolicy feasible;
  DeterministicPolicy lower_bound;
  EvalMode eval_mode = EvalMode::exact;
  std::vector<BisectionStep> trace;  // every (beta, evaluation) the solver computed, in order
};

/// Evaluation mode used inside the bisection for this space.
EvalMode bisection_eval_mode(const StateSpace& space, const SolverConfig& solver);
EvalOptions eval_options(const SolverConfig& solver);

/// Bisection on the multiplier with the feasibility test
/// delta_bar(pi*_beta) <= aoi_limit, until beta_u - beta_l < bisection_tol.
/// beta_upper is doubled (beta_lower moving up behind it) until feasible;
/// InfeasibleError if still infeasible at beta_expansion_cap. If the policy
/// at beta_lower is already feasible the constraint is slack and both
/// returned policies are that policy.
SolvedPolicies bisection_solve(const StateSpace& space, const SolverConfig& solver);

}  // namespace harq_aoi
