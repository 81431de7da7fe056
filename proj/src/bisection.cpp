#include <cmath>
#include <sstream>
#include <string>

#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/errors.hpp"

namespace harq_aoi {

EvalMode bisection_eval_mode(const StateSpace& space, const SolverConfig& solver) {
  return space.size() <= solver.exact_eval_max_states ? EvalMode::exact : EvalMode::monte_carlo;
}

EvalOptions eval_options(const SolverConfig& solver) {
  EvalOptions o;
  o.stationary_tol = solver.stationary_tol;
  o.max_iterations = solver.stationary_max_iterations;
  o.direct_solve_max_states = solver.direct_solve_max_states;
  o.horizon = solver.mc_horizon;
  o.seed = solver.mc_seed;
  return o;
}

namespace {

struct Solver {
  const StateSpace& space;
  const SolverConfig& cfg;
  EvalMode mode;
  EvalOptions options;
  std::vector<BisectionStep>& trace;

  DeterministicPolicy solve(double beta) {
    RviaOptions ro;
    ro.tolerance = cfg.rvia_tol;
    ro.max_iterations = cfg.rvia_max_iterations;
    ro.aperiodicity = cfg.rvia_aperiodicity;
    auto r = rvia(space, beta, ro);
    DeterministicPolicy p;
    p.beta = beta;
    p.gain = r.gain;
    p.actions = std::move(r.policy);
    p.evaluation = evaluate_policy(space, p.actions, mode, options);
    trace.push_back({beta, p.gain, p.evaluation.tau_bar, p.evaluation.delta_bar, feasible(p), r.iterations});
    return p;
  }

  bool feasible(const DeterministicPolicy& p) const {
    return p.evaluation.delta_bar <= space.config().aoi_limit + 1e-12;
  }
};

}  // namespace

SolvedPolicies bisection_solve(const StateSpace& space, const SolverConfig& solver) {
  if (!(solver.bisection_tol > 0.0)) throw std::invalid_argument("bisection_tol must be > 0");
  if (!(solver.beta_lower >= 0.0 && solver.beta_upper > solver.beta_lower))
    throw std::invalid_argument("need 0 <= beta_lower < beta_upper");

  SolvedPolicies out;
  out.eval_mode = bisection_eval_mode(space, solver);
  Solver s{space, solver, out.eval_mode, eval_options(solver), out.trace};
  const double limit = space.config().aoi_limit;

  double beta_l = solver.beta_lower;
  DeterministicPolicy lower = s.solve(beta_l);
  if (s.feasible(lower)) {
    out.beta_tilde = beta_l;
    out.beta_lower = beta_l;
    out.feasible = lower;
    out.lower_bound = std::move(lower);
    return out;
  }

  double beta_u = solver.beta_upper;
  DeterministicPolicy upper = s.solve(beta_u);
  while (!s.feasible(upper)) {
    if (beta_u >= solver.beta_expansion_cap) {
      std::ostringstream msg;
      msg << "aoi_limit = " << limit << " is not achievable: at beta = " << beta_u
          << " the average AoI is still " << upper.evaluation.delta_bar;
      throw InfeasibleError(msg.str());
    }
    beta_l = beta_u;
    lower = std::move(upper);
    beta_u = std::min(2.0 * beta_u, solver.beta_expansion_cap);
    upper = s.solve(beta_u);
  }

  while (beta_u - beta_l >= solver.bisection_tol) {
    const double mid = 0.5 * (beta_u + beta_l);
    auto p = s.solve(mid);
    if (s.feasible(p)) {
      beta_u = mid;
      upper = std::move(p);
    } else {
      beta_l = mid;
      lower = std::move(p);
    }
  }

  out.beta_tilde = beta_u;
  out.beta_lower = beta_l;
  out.feasible = std::move(upper);
  out.lower_bound = std::move(lower);
  return out;
}

}  // namespace harq_aoi
