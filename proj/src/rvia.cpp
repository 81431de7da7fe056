#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/errors.hpp"

namespace harq_aoi {

double lagrangian_cost(const SystemState& s, const Action& a, double beta) {
  return (a.transmits() ? 1.0 : 0.0) + beta * avg_aoi(s);
}

namespace {

// min_a [c(a) + E h(s')] for state s; returns the minimizing pair index.
struct Backup {
  double value;
  std::uint32_t pair;
};

inline Backup backup(const TransitionTable& t, std::size_t s, const std::vector<double>& h, double mix) {
  Backup best{std::numeric_limits<double>::infinity(), 0};
  for (auto p = t.state_begin[s]; p < t.state_begin[s + 1]; ++p) {
    double expect = 0.0;
    for (auto j = t.pair_begin[p]; j < t.pair_begin[p + 1]; ++j)
      expect += t.prob_values[t.succ_prob[j]] * h[static_cast<std::size_t>(t.succ_target[j])];
    if (mix < 1.0) expect = mix * expect + (1.0 - mix) * h[s];
    const double q = (t.pair_action[p] != 0 ? 1.0 : 0.0) + expect;
    if (q < best.value) best = {q, p};
  }
  return best;
}

}  // namespace

RviaResult rvia(const StateSpace& space, double beta, const RviaOptions& options) {
  if (!(options.tolerance > 0.0)) throw std::invalid_argument("rvia: tolerance must be > 0");
  if (!(options.aperiodicity > 0.0 && options.aperiodicity <= 1.0))
    throw std::invalid_argument("rvia: aperiodicity must lie in (0, 1]");

  const auto& t = space.transitions();
  const auto n = space.size();
  const auto ref = StateSpace::reference();
  const auto aoi = space.avg_aoi_values();

  RviaResult out;
  std::vector<double> h_prev(n, 0.0);  // h^1
  std::vector<double> h(n, 0.0);
  std::vector<double> v(n, 0.0);
  double change = 1.0;  // max |h^1 - h^0| with h^0 = 1
  int i = 1;

  while (change >= options.tolerance) {
    if (i >= options.max_iterations)
      throw ConvergenceError("RVIA did not converge within " + std::to_string(options.max_iterations) +
                             " iterations at beta = " + std::to_string(beta) + " (residual " +
                             std::to_string(change) + ")");
    ++i;
    for (std::size_t s = 0; s < n; ++s) v[s] = beta * aoi[s] + backup(t, s, h_prev, options.aperiodicity).value;
    const double v_ref = v[ref];
    change = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      h[s] = v[s] - v_ref;
      change = std::max(change, std::abs(h[s] - h_prev[s]));
    }
    if (!std::isfinite(change)) throw ConvergenceError("RVIA produced non-finite values at beta = " + std::to_string(beta));
    h.swap(h_prev);
  }

  // h_prev now holds the final h^i.
  out.policy.resize(n);
  for (std::size_t s = 0; s < n; ++s)
    out.policy[s] = t.pair_action[backup(t, s, h_prev, options.aperiodicity).pair];
  out.gain = v[ref];
  out.relative_value = std::move(h_prev);
  out.value = std::move(v);
  out.iterations = i;
  out.last_change = change;
  return out;
}

}  // namespace harq_aoi
