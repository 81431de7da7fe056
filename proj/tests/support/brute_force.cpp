#include "brute_force.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

namespace harq_aoi::testing {

namespace {

// Successors of (state, action code) as global indices with probabilities.
std::vector<std::pair<std::size_t, double>> successors(const StateSpace& space, std::size_t s, int code) {
  const auto& t = space.transitions();
  const auto p = space.pair_index(s, code);
  if (!p) throw std::invalid_argument("infeasible action in brute force");
  std::vector<std::pair<std::size_t, double>> out;
  for (auto j = t.pair_begin[*p]; j < t.pair_begin[*p + 1]; ++j)
    out.emplace_back(static_cast<std::size_t>(t.succ_target[j]), t.prob_values[t.succ_prob[j]]);
  return out;
}

// Row of the Cesaro limit matrix for the local start state 0. The lazy
// chain (I + P) / 2 is aperiodic with the same Cesaro limit; repeated
// squaring drives it to the limit.
Eigen::RowVectorXd cesaro_row(const Eigen::MatrixXd& p) {
  const auto n = p.rows();
  Eigen::MatrixXd m = 0.5 * (Eigen::MatrixXd::Identity(n, n) + p);
  for (int i = 0; i < 64; ++i) {
    Eigen::MatrixXd sq = m * m;
    for (Eigen::Index r = 0; r < n; ++r) sq.row(r) /= sq.row(r).sum();
    const double change = (sq - m).cwiseAbs().maxCoeff();
    m.swap(sq);
    if (change < 1e-14) break;
  }
  return m.row(0);
}

ChainAverages averages(const StateSpace& space, const std::vector<std::size_t>& order, const std::vector<int>& policy) {
  const auto n = static_cast<Eigen::Index>(order.size());
  std::vector<Eigen::Index> local(space.size(), -1);
  for (Eigen::Index i = 0; i < n; ++i) local[order[static_cast<std::size_t>(i)]] = i;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = order[static_cast<std::size_t>(i)];
    for (const auto& [g, q] : successors(space, s, policy[s])) p(i, local[g]) += q;
  }
  const auto pi = cesaro_row(p);
  ChainAverages out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = order[static_cast<std::size_t>(i)];
    out.tau_bar += pi[i] * (policy[s] != 0 ? 1.0 : 0.0);
    out.delta_bar += pi[i] * space.avg_aoi(s);
  }
  return out;
}

std::vector<std::size_t> reachable(const StateSpace& space, const std::vector<int>& policy) {
  std::vector<std::size_t> order{StateSpace::reference()};
  std::vector<char> seen(space.size(), 0);
  seen[StateSpace::reference()] = 1;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (const auto& [g, q] : successors(space, order[i], policy[order[i]]))
      if (!seen[g]) {
        seen[g] = 1;
        order.push_back(g);
      }
  return order;
}

struct Search {
  const StateSpace& space;
  const std::function<void(const std::vector<int>&, const ChainAverages&)>& visit;
  std::vector<int> policy;
  std::vector<std::size_t> order;
  std::vector<char> seen;
  std::size_t count = 0;

  void run(std::size_t i) {
    if (i == order.size()) {
      visit(policy, averages(space, order, policy));
      ++count;
      return;
    }
    const auto s = order[i];
    const auto& t = space.transitions();
    for (auto p = t.state_begin[s]; p < t.state_begin[s + 1]; ++p) {
      const int code = t.pair_action[p];
      policy[s] = code;
      const auto mark = order.size();
      for (const auto& [g, q] : successors(space, s, code))
        if (!seen[g]) {
          seen[g] = 1;
          order.push_back(g);
        }
      run(i + 1);
      for (auto j = mark; j < order.size(); ++j) seen[order[j]] = 0;
      order.resize(mark);
    }
    policy[s] = 0;
  }
};

}  // namespace

ChainAverages cesaro_averages(const StateSpace& space, const std::vector<int>& policy) {
  return averages(space, reachable(space, policy), policy);
}

std::size_t for_each_policy(const StateSpace& space,
                            const std::function<void(const std::vector<int>&, const ChainAverages&)>& visit) {
  Search search{space, visit, std::vector<int>(space.size(), 0), {StateSpace::reference()},
                std::vector<char>(space.size(), 0)};
  search.seen[StateSpace::reference()] = 1;
  search.run(0);
  return search.count;
}

BruteForceResult brute_force_gain(const StateSpace& space, double beta) {
  BruteForceResult result;
  result.best_gain = std::numeric_limits<double>::infinity();
  result.policies = for_each_policy(space, [&](const std::vector<int>& policy, const ChainAverages& avg) {
    const double gain = avg.tau_bar + beta * avg.delta_bar;
    if (gain < result.best_gain) {
      result.best_gain = gain;
      result.best_policy = policy;
    }
  });
  return result;
}

double brute_force_constrained_tau(const StateSpace& space, double limit) {
  double best = std::numeric_limits<double>::infinity();
  for_each_policy(space, [&](const std::vector<int>&, const ChainAverages& avg) {
    if (avg.delta_bar <= limit + 1e-12) best = std::min(best, avg.tau_bar);
  });
  return best;
}

std::vector<SystemState> brute_force_closure(const SystemConfig& cfg) {
  auto less = [](const SystemState& a, const SystemState& b) {
    auto key = [](const SystemState& s) {
      std::vector<int> v;
      for (const auto& x : s.sources) v.insert(v.end(), {x.fresh_age, x.proc_age, x.aoi, x.attempts});
      return v;
    };
    return key(a) < key(b);
  };
  std::set<SystemState, decltype(less)> seen(less);
  std::vector<SystemState> stack{SystemState::initial(cfg)};
  seen.insert(stack.front());
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    for (const auto& a : feasible_actions(s, cfg))
      for (const auto& [next, p] : transition_kernel(s, a, cfg))
        if (p > 0.0 && seen.insert(next).second) stack.push_back(next);
  }
  return {seen.begin(), seen.end()};
}

}  // namespace harq_aoi::testing
