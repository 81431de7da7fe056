#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <string>

#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/errors.hpp"
#include "harq_aoi/rng.hpp"
#include "harq_aoi/stats.hpp"

namespace harq_aoi {

std::string to_string(EvalMode mode) { return mode == EvalMode::exact ? "exact" : "monte_carlo"; }

namespace {

std::uint32_t policy_pair(const StateSpace& space, std::span<const std::uint16_t> policy, std::size_t s) {
  const auto p = space.pair_index(s, policy[s]);
  if (!p)
    throw std::invalid_argument("policy action " + std::to_string(policy[s]) + " is infeasible in state " +
                                to_string(space.state(s)));
  return static_cast<std::uint32_t>(*p);
}

// Sub-chain induced by the policy on the states reachable from s_0, in local
// indices (local 0 is s_0).
struct InducedChain {
  std::vector<std::size_t> global;
  std::vector<std::uint32_t> begin;
  std::vector<std::int32_t> target;
  std::vector<double> prob;
  std::vector<double> cost;
  std::vector<double> aoi;
};

InducedChain induce_chain(const StateSpace& space, std::span<const std::uint16_t> policy) {
  const auto& t = space.transitions();
  std::vector<std::int32_t> local(space.size(), -1);
  InducedChain chain;
  chain.global.push_back(StateSpace::reference());
  local[StateSpace::reference()] = 0;
  chain.begin.push_back(0);
  for (std::size_t i = 0; i < chain.global.size(); ++i) {
    const auto s = chain.global[i];
    const auto p = policy_pair(space, policy, s);
    for (auto j = t.pair_begin[p]; j < t.pair_begin[p + 1]; ++j) {
      const auto g = static_cast<std::size_t>(t.succ_target[j]);
      if (local[g] < 0) {
        local[g] = static_cast<std::int32_t>(chain.global.size());
        chain.global.push_back(g);
      }
      chain.target.push_back(local[g]);
      chain.prob.push_back(t.prob_values[t.succ_prob[j]]);
    }
    chain.begin.push_back(static_cast<std::uint32_t>(chain.target.size()));
    chain.cost.push_back(policy[s] != 0 ? 1.0 : 0.0);
    chain.aoi.push_back(space.avg_aoi(s));
  }
  return chain;
}

bool solve_direct(const InducedChain& c, std::vector<double>& pi) {
  const auto n = static_cast<Eigen::Index>(c.global.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(c.target.size() + c.global.size() * 2);
  // Rows 1..n-1: pi (P - I) = 0 transposed; row 0 replaced by sum(pi) = 1.
  for (Eigen::Index s = 0; s < n; ++s) {
    for (auto j = c.begin[static_cast<std::size_t>(s)]; j < c.begin[static_cast<std::size_t>(s) + 1]; ++j)
      if (c.target[j] != 0) triplets.emplace_back(c.target[j], s, c.prob[j]);
    if (s != 0) triplets.emplace_back(s, s, -1.0);
    triplets.emplace_back(0, s, 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) return false;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[0] = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) return false;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || x[i] < -1e-9) return false;
    sum += x[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) return false;
  pi.assign(x.data(), x.data() + n);
  for (auto& p : pi) p = std::max(p, 0.0);
  return true;
}

void solve_power(const InducedChain& c, const EvalOptions& options, std::vector<double>& pi) {
  const auto n = c.global.size();
  pi.assign(n, 0.0);
  pi[0] = 1.0;
  std::vector<double> next(n);
  for (int it = 0; it < options.max_iterations; ++it) {
    for (std::size_t s = 0; s < n; ++s) next[s] = 0.5 * pi[s];
    for (std::size_t s = 0; s < n; ++s) {
      const double mass = 0.5 * pi[s];
      if (mass == 0.0) continue;
      for (auto j = c.begin[s]; j < c.begin[s + 1]; ++j) next[static_cast<std::size_t>(c.target[j])] += mass * c.prob[j];
    }
    double diff = 0.0;
    for (std::size_t s = 0; s < n; ++s) diff += std::abs(next[s] - pi[s]);
    pi.swap(next);
    if (diff < options.stationary_tol) return;
  }
  throw ConvergenceError("stationary distribution did not converge within " + std::to_string(options.max_iterations) +
                         " power iterations (" + std::to_string(n) + " reachable states)");
}

PolicyEvaluation evaluate_exact(const StateSpace& space, std::span<const std::uint16_t> policy,
                                const EvalOptions& options) {
  const auto chain = induce_chain(space, policy);
  std::vector<double> pi;
  if (chain.global.size() > options.direct_solve_max_states || !solve_direct(chain, pi)) solve_power(chain, options, pi);

  PolicyEvaluation out;
  out.mode = EvalMode::exact;
  out.reachable_states = chain.global.size();
  for (std::size_t s = 0; s < pi.size(); ++s) {
    out.tau_bar += pi[s] * chain.cost[s];
    out.delta_bar += pi[s] * chain.aoi[s];
  }
  return out;
}

PolicyEvaluation evaluate_monte_carlo(const StateSpace& space, std::span<const std::uint16_t> policy,
                                      const EvalOptions& options) {
  if (options.horizon < static_cast<std::uint64_t>(options.batches) || options.batches < 2)
    throw std::invalid_argument("monte-carlo evaluation needs horizon >= batches >= 2");
  const auto& t = space.transitions();
  Rng rng(options.seed);
  const std::uint64_t batch_len = options.horizon / static_cast<std::uint64_t>(options.batches);

  std::vector<double> tau_batches, delta_batches;
  std::size_t s = StateSpace::reference();
  double tau_sum = 0.0, delta_sum = 0.0;
  for (int b = 0; b < options.batches; ++b) {
    double bt = 0.0, bd = 0.0;
    for (std::uint64_t i = 0; i < batch_len; ++i) {
      const auto p = policy_pair(space, policy, s);
      bt += policy[s] != 0 ? 1.0 : 0.0;
      bd += space.avg_aoi(s);
      const double u = uniform01(rng);
      double acc = 0.0;
      auto j = t.pair_begin[p];
      const auto last = t.pair_begin[p + 1] - 1;
      for (; j < last; ++j) {
        acc += t.prob_values[t.succ_prob[j]];
        if (u < acc) break;
      }
      s = static_cast<std::size_t>(t.succ_target[j]);
    }
    tau_batches.push_back(bt / static_cast<double>(batch_len));
    delta_batches.push_back(bd / static_cast<double>(batch_len));
    tau_sum += bt;
    delta_sum += bd;
  }

  PolicyEvaluation out;
  out.mode = EvalMode::monte_carlo;
  const auto total = static_cast<double>(batch_len * static_cast<std::uint64_t>(options.batches));
  out.tau_bar = tau_sum / total;
  out.delta_bar = delta_sum / total;
  out.tau_ci = mean_ci95(tau_batches).halfwidth;
  out.delta_ci = mean_ci95(delta_batches).halfwidth;
  out.horizon = options.horizon;
  out.seed = options.seed;
  return out;
}

}  // namespace

PolicyEvaluation evaluate_policy(const StateSpace& space, std::span<const std::uint16_t> policy, EvalMode mode,
                                 const EvalOptions& options) {
  if (policy.size() != space.size())
    throw std::invalid_argument("policy has " + std::to_string(policy.size()) + " entries, state space has " +
                                std::to_string(space.size()));
  return mode == EvalMode::exact ? evaluate_exact(space, policy, options)
                                 : evaluate_monte_carlo(space, policy, options);
}

}  // namespace harq_aoi
