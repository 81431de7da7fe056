// Acceptance checks. `acceptance N` runs criterion N, no argument runs all.
// Each criterion prints one PASS/FAIL line followed by its measurements.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/dql.hpp"
#include "harq_aoi/errors.hpp"
#include "harq_aoi/eval.hpp"
#include "harq_aoi/lyapunov.hpp"
#include "harq_aoi/verify.hpp"

using namespace harq_aoi;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream log;

  void require(bool ok, const std::string& what) {
    log << "    " << (ok ? "ok   " : "FAIL ") << what << '\n';
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// K = 2 (one random, one generate-at-will), eta = 0.4, lambda = 0.7.
SystemConfig paper_system(int cap, int max_attempts, double p0, double limit) {
  SystemConfig cfg;
  cfg.num_random_sources = 1;
  cfg.num_gaw_sources = 1;
  cfg.arrival_probs = {0.7};
  cfg.first_error_prob = p0;
  cfg.harq_gain = 0.4;
  cfg.max_attempts = max_attempts;
  cfg.aoi_cap = cap;
  cfg.aoi_limit = limit;
  cfg.dpp_weight = 30.0;
  return cfg;
}

SystemConfig desk_instance() { return paper_system(10, 3, 0.4, 4.0); }

SimOptions sim(std::uint64_t horizon = 100'000, int seeds = 10) {
  SimOptions opt;
  opt.horizon = horizon;
  for (int s = 1; s <= seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
  opt.burn_in_fraction = 0.1;
  return opt;
}

RunMetrics simulate_lcdt(const SystemConfig& cfg, std::uint64_t horizon = 100'000, int seeds = 10) {
  return simulate(LcdtController(cfg), cfg, sim(horizon, seeds));
}

std::string metrics(const RunMetrics& m) {
  return "tau " + fmt(m.tau_bar) + " +- " + fmt(m.tau_ci, 3) + ", delta " + fmt(m.delta_bar) + " +- " +
         fmt(m.delta_ci, 3);
}

// Limit check for simulated runs: the confidence halfwidth plus the
// 5/sqrt(T) residual the virtual queue allows after T slots.
bool meets_limit(const RunMetrics& m, double limit, std::uint64_t horizon = 100'000) {
  return m.delta_bar <= limit + m.delta_ci + 5.0 / std::sqrt(static_cast<double>(horizon));
}

SolvedPolicies solve(const SystemConfig& cfg) {
  const auto space = StateSpace::enumerate(cfg, SolverConfig{}.max_states);
  return bisection_solve(space, SolverConfig{});
}

// Same random (config, state, action, Q) samples for criteria 1 and 2.
template <class F>
void for_random_pairs(std::size_t n, std::uint64_t seed, F&& f) {
  Rng rng(seed);
  SystemConfig cfg;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 25 == 0) cfg = random_config(rng, 4);
    const auto s = random_state(cfg, rng);
    const auto actions = feasible_actions(s, cfg);
    const auto a = actions[uniform_index(rng, actions.size())];
    const double q = uniform01(rng) < 0.2 ? 0.0 : 40.0 * uniform01(rng);
    f(cfg, NetworkState{s, q}, a);
  }
}

struct KernelMoments {
  double m1 = 0.0, m2 = 0.0;
};

KernelMoments kernel_moments(const NetworkState& o, const Action& a, const SystemConfig& cfg) {
  KernelMoments m;
  for (const auto& [next, p] : transition_kernel(o.system, a, cfg)) {
    const double d = avg_aoi(next);
    m.m1 += p * d;
    m.m2 += p * d * d;
  }
  return m;
}

constexpr std::size_t kPairs = 20000;

void moment_oracle(Outcome& out) {
  const auto t0 = Clock::now();
  double worst1 = 0.0, worst2 = 0.0;
  for_random_pairs(kPairs, 2024, [&](const SystemConfig& cfg, const NetworkState& o, const Action& a) {
    const auto m = kernel_moments(o, a, cfg);
    worst1 = std::max(worst1, std::abs(expected_next_aoi(o, a, cfg) - m.m1));
    worst2 = std::max(worst2, std::abs(expected_next_aoi_sq(o, a, cfg) - m.m2));
  });
  const double secs = since(t0);
  out.log << "    " << kPairs << " pairs, worst |E1 - kernel| " << worst1 << ", worst |E2 - kernel| " << worst2
          << ", " << fmt(secs, 3) << " s\n";
  out.require(worst1 <= 1e-10, "first moment within 1e-10");
  out.require(worst2 <= 1e-10, "second moment within 1e-10");
  out.require(secs < 60.0, "runtime under one minute");
}

void dpp_consistency(Outcome& out) {
  double worst = 0.0;
  for_random_pairs(kPairs, 2024, [&](const SystemConfig& cfg, const NetworkState& o, const Action& a) {
    const auto m = kernel_moments(o, a, cfg);
    const double D = cfg.aoi_limit;
    const double bound =
        cfg.dpp_weight * (a.transmits() ? 1.0 : 0.0) + 0.5 * (D * D + m.m2 + 2.0 * o.queue * (m.m1 - D));
    worst = std::max(worst, std::abs(dpp_objective(o, a, cfg) - bound));
  });
  out.log << "    " << kPairs << " pairs, worst |W - recomposed bound| " << worst << '\n';
  out.require(worst <= 1e-10, "objective within 1e-10");
}

void rvia_brute_force(Outcome& out) {
  struct Tiny {
    const char* name;
    SystemConfig cfg;
    double beta;
  };
  std::vector<Tiny> cases;
  {
    SystemConfig c;
    c.num_random_sources = 0;
    c.num_gaw_sources = 1;
    c.aoi_cap = 3;
    c.max_attempts = 1;
    c.first_error_prob = 0.0;
    c.aoi_limit = 2.0;
    cases.push_back({"one generate-at-will source, perfect channel", c, 1.0});
    c.first_error_prob = 0.5;
    c.max_attempts = 2;
    cases.push_back({"one generate-at-will source, two attempts", c, 0.7});
  }
  {
    SystemConfig c;
    c.num_random_sources = 1;
    c.num_gaw_sources = 0;
    c.arrival_probs = {0.6};
    c.aoi_cap = 2;
    c.max_attempts = 1;
    c.first_error_prob = 0.4;
    c.harq_gain = 0.5;
    c.aoi_limit = 1.5;
    cases.push_back({"one random source", c, 3.0});
  }
  {
    SystemConfig c;
    c.num_random_sources = 0;
    c.num_gaw_sources = 2;
    c.aoi_cap = 2;
    c.max_attempts = 1;
    c.first_error_prob = 0.3;
    c.aoi_limit = 1.5;
    c.allow_retx_without_packet = false;
    cases.push_back({"two generate-at-will sources", c, 3.0});
  }
  RviaOptions opt;
  opt.tolerance = 1e-12;
  for (const auto& c : cases) {
    const auto space = StateSpace::enumerate(c.cfg, 1000);
    const auto r = rvia(space, c.beta, opt);
    const auto bf = testing::brute_force_gain(space, c.beta);
    const double diff = std::abs(r.gain - bf.best_gain);
    out.log << "    " << c.name << ": " << space.size() << " states, " << bf.policies << " policies, rvia "
            << fmt(r.gain, 12) << ", enumeration " << fmt(bf.best_gain, 12) << '\n';
    out.require(space.size() <= 200, std::string(c.name) + ": at most 200 states");
    out.require(diff <= 1e-6, std::string(c.name) + ": gains agree within 1e-6");
  }
}

void cmdp_sandwich(Outcome& out) {
  const auto t0 = Clock::now();
  const auto cfg = desk_instance();
  const auto solved = solve(cfg);
  const auto& f = solved.feasible.evaluation;
  const auto& l = solved.lower_bound.evaluation;
  const auto lc = simulate_lcdt(cfg);
  out.log << "    feasible: beta " << fmt(solved.feasible.beta) << ", tau " << fmt(f.tau_bar) << ", delta "
          << fmt(f.delta_bar) << " (" << to_string(f.mode) << ")\n";
  out.log << "    lower bound: beta " << fmt(solved.lower_bound.beta) << ", tau " << fmt(l.tau_bar) << ", delta "
          << fmt(l.delta_bar) << '\n';
  out.log << "    lcdt (V = 30): " << metrics(lc) << '\n';
  out.require(l.tau_bar <= f.tau_bar, "lower bound <= feasible policy");
  out.require(l.tau_bar <= lc.tau_bar, "lower bound <= LC-DT");
  out.require(f.delta_bar <= cfg.aoi_limit, "feasible policy meets the AoI limit");
  out.require(meets_limit(lc, cfg.aoi_limit), "LC-DT meets the AoI limit (CI-adjusted)");
  out.require(f.tau_bar <= 1.15 * l.tau_bar, "feasible policy within 15% of the lower bound");
  out.require(lc.tau_bar <= 1.15 * l.tau_bar, "LC-DT within 15% of the lower bound");
  const double secs = since(t0);
  out.log << "    " << fmt(secs, 3) << " s\n";
  out.require(secs < 1800.0, "runtime under 30 minutes");
}

void trend_error_and_arrivals(Outcome& out) {
  auto tau = [&](double p0, double lambda) {
    auto cfg = paper_system(12, 5, p0, 4.0);
    cfg.arrival_probs = {lambda};
    const auto solved = solve(cfg);
    out.log << "    p0 " << p0 << ", lambda " << lambda << ": tau " << fmt(solved.feasible.evaluation.tau_bar)
            << ", delta " << fmt(solved.feasible.evaluation.delta_bar) << '\n';
    return solved.feasible.evaluation.tau_bar;
  };
  const double p04 = tau(0.4, 0.7), p06 = tau(0.6, 0.7);
  const double up_p0 = p06 / p04 - 1.0;
  out.log << "    p0 0.4 -> 0.6 raises tau by " << fmt(100.0 * up_p0, 4) << "%\n";
  out.require(std::abs(up_p0 - 0.50) <= 0.20, "error-probability increase 50% +- 20 pp");
  const double l5 = tau(0.4, 0.5), l2 = tau(0.4, 0.2);
  const double up_l = l2 / l5 - 1.0;
  out.log << "    lambda 0.5 -> 0.2 raises tau by " << fmt(100.0 * up_l, 4) << "%\n";
  out.require(std::abs(up_l - 0.75) <= 0.25, "arrival-rate increase 75% +- 25 pp");
}

void weight_monotonicity(Outcome& out) {
  auto cfg = paper_system(18, 5, 0.4, 4.0);
  std::vector<RunMetrics> runs;
  for (double v : {2.0, 10.0, 20.0, 30.0, 100.0}) {
    cfg.dpp_weight = v;
    runs.push_back(simulate_lcdt(cfg));
    out.log << "    V " << v << ": " << metrics(runs.back()) << '\n';
  }
  bool tau_down = true, delta_up = true, within = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    within = within && meets_limit(runs[i], cfg.aoi_limit);
    if (i == 0) continue;
    const auto& a = runs[i - 1];
    const auto& b = runs[i];
    tau_down = tau_down && b.tau_bar <= a.tau_bar + a.tau_ci + b.tau_ci;
    delta_up = delta_up && b.delta_bar >= a.delta_bar - a.delta_ci - b.delta_ci;
  }
  out.require(tau_down, "tau non-increasing in V (within CI)");
  out.require(delta_up, "delta non-decreasing in V (within CI)");
  out.require(within, "delta within the limit for every V (CI-adjusted)");
}

void baseline_gap(Outcome& out) {
  const auto cfg = desk_instance();
  const auto lc = simulate_lcdt(cfg);
  const auto base = simulate(BaselineController(cfg), cfg, sim());
  const double gain = 1.0 - lc.tau_bar / base.tau_bar;
  out.log << "    lcdt: " << metrics(lc) << '\n';
  out.log << "    baseline: " << metrics(base) << '\n';
  out.log << "    LC-DT transmits " << fmt(100.0 * gain, 4) << "% less than the baseline\n";
  out.require(gain >= 0.25, "LC-DT at least 25% below the baseline");
}

void harq_benefit(Outcome& out) {
  {
    auto cfg = desk_instance();
    cfg.first_error_prob = 0.6;
    cfg.harq_gain = 0.3;
    cfg.max_attempts = 1;
    const auto one = simulate_lcdt(cfg);
    cfg.max_attempts = 2;
    const auto two = simulate_lcdt(cfg);
    out.log << "    p0 0.6, x_max 1: " << metrics(one) << '\n';
    out.log << "    p0 0.6, x_max 2: " << metrics(two) << '\n';
    out.require(two.tau_bar + two.tau_ci < one.tau_bar - one.tau_ci, "tau strictly lower with one retransmission");
  }
  {
    auto cfg = desk_instance();
    cfg.first_error_prob = 0.7;
    cfg.harq_gain = 0.3;
    cfg.max_attempts = 1;
    bool infeasible = false;
    try {
      (void)solve(cfg);
    } catch (const InfeasibleError& e) {
      infeasible = true;
      out.log << "    p0 0.7, x_max 1: " << e.what() << '\n';
    }
    out.require(infeasible, "p0 0.7 without HARQ is reported infeasible");
  }
  {
    SystemConfig cfg;
    cfg.num_random_sources = 3;
    cfg.num_gaw_sources = 3;
    cfg.arrival_probs = {0.7};
    cfg.first_error_prob = 0.6;
    cfg.harq_gain = 0.4;
    cfg.aoi_cap = 18;
    cfg.aoi_limit = 10.0;
    cfg.max_attempts = 1;
    const auto without = simulate_lcdt(cfg);
    cfg.max_attempts = 5;
    const auto with = simulate_lcdt(cfg);
    const double drop = 1.0 - with.tau_bar / without.tau_bar;
    out.log << "    K 6, no HARQ: " << metrics(without) << '\n';
    out.log << "    K 6, HARQ (x_max 5): " << metrics(with) << '\n';
    out.log << "    HARQ lowers tau by " << fmt(100.0 * drop, 4) << "%\n";
    out.require(std::abs(drop - 0.30) <= 0.15, "HARQ reduction 30% +- 15 pp");
  }
}

void dql_properties(Outcome& out) {
  const auto grad = check_td_gradient(31);
  out.log << "    gradient check: " << grad.samples << " parameters, worst relative error " << grad.worst << '\n';
  out.require(grad.worst <= 1e-4, "TD gradient within 1e-4 relative error");

  auto cfg = paper_system(18, 5, 0.3, 4.0);
  TrainConfig train;
  train.episodes = 150;
  train.target_sync_steps = 2000;
  Rng rng(1);
  const auto t0 = Clock::now();
  const auto result = train_dql(cfg, train, rng);
  out.log << "    trained " << train.episodes << " episodes in " << fmt(since(t0), 3) << " s\n";
  const std::size_t tenth = result.curve.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < tenth; ++i) {
    first += result.curve[i].mean_return / static_cast<double>(tenth);
    last += result.curve[result.curve.size() - 1 - i].mean_return / static_cast<double>(tenth);
  }
  out.log << "    mean return: first decile " << fmt(first) << ", last decile " << fmt(last) << '\n';
  out.require(last > first, "final-decile return exceeds first-decile return");

  const DqlController dql(std::make_shared<const QNetwork>(result.network), cfg, train);
  const auto d = simulate(dql, cfg, sim(100'000, 5));
  const auto lc = simulate_lcdt(cfg, 100'000, 5);
  out.log << "    dql greedy: " << metrics(d) << '\n';
  out.log << "    lcdt: " << metrics(lc) << '\n';
  out.require(d.delta_bar <= 1.1 * cfg.aoi_limit, "greedy delta within the limit + 10%");
  out.require(std::abs(d.tau_bar - lc.tau_bar) <= 0.4 * lc.tau_bar, "greedy tau within 40% of LC-DT");
}

void latency_ordering(Outcome& out) {
  const auto cfg = desk_instance();
  auto space = std::make_shared<const StateSpace>(StateSpace::enumerate(cfg, SolverConfig{}.max_states));
  const auto solved = bisection_solve(*space, SolverConfig{});
  TablePolicyController table(space, std::make_shared<const std::vector<std::uint16_t>>(solved.feasible.actions));
  LcdtController lcdt(cfg);
  TrainConfig train;
  Rng init(3);
  auto net = std::make_shared<const QNetwork>(QNetwork(feature_count(2), train.hidden_layers, num_action_codes(2), init));
  DqlController dql(net, cfg, train);

  std::vector<SystemState> states;
  Rng rng(5);
  LcdtController walker(cfg);
  auto s = SystemState::initial(cfg);
  for (int t = 0; t < 2000; ++t) {
    const auto a = walker.decide(s, rng);
    const auto o = step(s, a, rng, cfg);
    walker.observe(s, a, o);
    s = o.next_state;
    states.push_back(s);
  }
  // Interleave the measurements so that drift in machine load affects all three alike.
  double t_table = 0.0, t_lcdt = 0.0, t_dql = 0.0;
  for (int round = 0; round < 5; ++round) {
    t_table += decision_latency(table, states, 20, rng);
    t_lcdt += decision_latency(lcdt, states, 20, rng);
    t_dql += decision_latency(dql, states, 20, rng);
  }
  out.log << "    per decision: table " << fmt(t_table / 5 * 1e9, 4) << " ns, LC-DT " << fmt(t_lcdt / 5 * 1e9, 4)
          << " ns, DQL " << fmt(t_dql / 5 * 1e9, 4) << " ns\n";
  out.require(t_table < t_lcdt, "table lookup faster than LC-DT");
  out.require(t_lcdt < t_dql, "LC-DT faster than a DQL forward pass");
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "closed-form AoI moments match the transition kernel", moment_oracle},
      {2, "drift-plus-penalty objective matches its recomposition", dpp_consistency},
      {3, "relative value iteration matches exhaustive enumeration", rvia_brute_force},
      {4, "lower bound <= LC-DT and feasible policy, both within 15%", cmdp_sandwich},
      {5, "transmissions rise with error probability and with sparser arrivals", trend_error_and_arrivals},
      {6, "LC-DT trades transmissions for AoI as V grows", weight_monotonicity},
      {7, "LC-DT at least 25% below the baseline", baseline_gap},
      {8, "HARQ lowers transmissions and rescues infeasible channels", harq_benefit},
      {9, "deep Q-learning gradient, learning curve and constraint", dql_properties},
      {10, "decision latency: table < LC-DT < DQL", latency_ordering},
  };
  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [1-" << criteria.size() << "]\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("unexpected exception: ") + e.what());
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " (" << fmt(since(t0), 3)
              << " s)\n"
              << out.log.str() << std::flush;
    failed += out.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
