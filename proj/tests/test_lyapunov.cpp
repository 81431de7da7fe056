#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "harq_aoi/lyapunov.hpp"
#include "harq_aoi/verify.hpp"

using namespace harq_aoi;

namespace {

SystemConfig gaw1(double p0) {
  SystemConfig cfg;
  cfg.num_random_sources = 0;
  cfg.num_gaw_sources = 1;
  cfg.first_error_prob = p0;
  cfg.aoi_limit = 4.0;
  return cfg;
}

double kernel_moment(const NetworkState& o, const Action& a, const SystemConfig& cfg, int power) {
  double m = 0.0;
  for (const auto& [next, p] : transition_kernel(o.system, a, cfg)) m += p * std::pow(avg_aoi(next), power);
  return m;
}

}  // namespace

TEST_SUITE("lyapunov") {

TEST_CASE("virtual queue update") {
  CHECK(virtual_queue_update(0.0, 4.0, 4.0) == 0.0);
  CHECK(virtual_queue_update(2.0, 6.0, 4.0) == 4.0);
  CHECK(virtual_queue_update(1.0, 0.0, 4.0) == 0.0);
}

TEST_CASE("first and second moments on a single source") {
  const auto cfg = gaw1(0.4);
  const NetworkState o{SystemState{{SourceState{0, 2, 5, 1}}}, 0.0};
  CHECK(expected_next_aoi(o, Action::fresh(0), cfg) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(expected_next_aoi_sq(o, Action::fresh(0), cfg) == doctest::Approx(15.0).epsilon(1e-14));
  CHECK(expected_next_aoi(o, Action::idle(), cfg) == 6.0);
  const NetworkState top{SystemState{{SourceState{0, 18, 18, 1}}}, 0.0};
  CHECK(expected_next_aoi(top, Action::idle(), cfg) == 18.0);
}

TEST_CASE("idle moments are deterministic") {
  SystemConfig cfg;
  cfg.aoi_cap = 10;
  const NetworkState o{SystemState{{SourceState{1, 2, 4, 0}, SourceState{0, 3, 10, 2}}}, 3.0};
  const double next = (5.0 + 10.0) / 2.0;
  CHECK(expected_next_aoi(o, Action::idle(), cfg) == doctest::Approx(next));
  CHECK(expected_next_aoi_sq(o, Action::idle(), cfg) == doctest::Approx(next * next));
}

TEST_CASE("two-source retransmission matches the kernel") {
  SystemConfig cfg;
  cfg.first_error_prob = 0.4;
  cfg.harq_gain = 0.4;
  cfg.arrival_probs = {0.7};
  const NetworkState o{SystemState{{SourceState{2, 4, 6, 1}, SourceState{0, 1, 3, 0}}}, 1.0};
  for (const auto& a : {Action::retransmit(0), Action::fresh(0), Action::fresh(1), Action::retransmit(1)}) {
    CHECK(expected_next_aoi(o, a, cfg) == doctest::Approx(kernel_moment(o, a, cfg, 1)).epsilon(1e-12));
    CHECK(expected_next_aoi_sq(o, a, cfg) == doctest::Approx(kernel_moment(o, a, cfg, 2)).epsilon(1e-12));
  }
}

TEST_CASE("closed forms against the kernel on random configurations") {
  const auto m = check_aoi_moments(3000, 101);
  CHECK(m.passed);
  CHECK(m.worst <= 1e-10);
  const auto w = check_dpp_objective(3000, 102);
  CHECK(w.passed);
  const auto n = check_kernel_normalization(3000, 103);
  CHECK(n.passed);
  CHECK(n.samples == 3000);
}

TEST_CASE("objective when idle with an empty queue") {
  SystemConfig cfg;
  cfg.aoi_cap = 10;
  const NetworkState o{SystemState{{SourceState{1, 2, 4, 0}, SourceState{0, 3, 7, 2}}}, 0.0};
  const double next = (5.0 + 8.0) / 2.0;
  CHECK(dpp_objective(o, Action::idle(), cfg) == doctest::Approx(0.5 * (16.0 + next * next)));
}

TEST_CASE("action selection") {
  SystemConfig cfg;
  cfg.aoi_cap = 18;
  cfg.aoi_limit = 4.0;

  cfg.dpp_weight = 1e9;
  const NetworkState busy{SystemState{{SourceState{3, 9, 17, 1}, SourceState{0, 5, 16, 0}}}, 50.0};
  CHECK(select_action(busy, cfg).action == Action::idle());

  cfg.dpp_weight = 30.0;
  const auto chosen = select_action(busy, cfg);
  CHECK(chosen.action.transmits());
  CHECK(chosen.evaluations <= 2 * cfg.num_sources() + 1);
  double best = std::numeric_limits<double>::infinity();
  Action arg;
  for (const auto& a : feasible_actions(busy.system, cfg)) {
    const double w = dpp_objective(busy, a, cfg);
    if (w < best) {
      best = w;
      arg = a;
    }
  }
  CHECK(chosen.action == arg);
  CHECK(chosen.objective == best);

  cfg.dpp_weight = 100.0;
  const NetworkState zero{SystemState::initial(cfg), 0.0};
  const auto idle = select_action(zero, cfg);
  CHECK(idle.action == Action::idle());
  CHECK(idle.evaluations == 5);
}

TEST_CASE("perfect channel keeps the average AoI under the limit") {
  auto cfg = gaw1(0.0);
  cfg.aoi_limit = 2.0;
  cfg.dpp_weight = 10.0;
  Rng rng(1);
  const std::uint64_t T = 100000;
  const auto run = run_lcdt(cfg, T, rng);
  double sum = 0.0;
  for (std::uint64_t t = T / 10; t < T; ++t) sum += run.slots[t].avg_aoi;
  CHECK(sum / static_cast<double>(T - T / 10) <= 2.0 + 1e-9);
  CHECK(run.tau_bar > 0.0);
}

TEST_CASE("queue stability implies the constraint") {
  SystemConfig cfg;
  cfg.aoi_limit = 4.0;
  Rng rng(3);
  const std::uint64_t T = 50000;
  const auto run = run_lcdt(cfg, T, rng);
  REQUIRE(run.slots.size() == T);
  CHECK(run.delta_bar <= cfg.aoi_limit + 5.0 / std::sqrt(static_cast<double>(T)));
  CHECK(run.mean_queue < 1000.0);
  CHECK(run.slots.back().running_delta_bar == doctest::Approx(run.delta_bar));
  CHECK(run.slots[0].queue == 0.0);
  CHECK(run.slots[0].avg_aoi == 0.0);
  for (std::size_t t = 1; t < run.slots.size(); ++t) {
    const auto& prev = run.slots[t - 1];
    // Q_t is the queue after the previous slot's update.
    REQUIRE(run.slots[t].queue == doctest::Approx(virtual_queue_update(prev.queue, run.slots[t].avg_aoi, 4.0)));
  }
}

TEST_CASE("larger weights trade AoI for fewer transmissions") {
  SystemConfig cfg;
  cfg.aoi_cap = 12;
  double last_tau = 2.0, last_delta = 0.0;
  for (double v : {20.0, 200.0}) {
    cfg.dpp_weight = v;
    Rng rng(5);
    const auto run = run_lcdt(cfg, 100000, rng);
    CHECK(run.tau_bar <= last_tau);
    CHECK(run.delta_bar >= last_delta);
    last_tau = run.tau_bar;
    last_delta = run.delta_bar;
  }
}

TEST_CASE("slot csv") {
  SystemConfig cfg;
  Rng rng(2);
  const auto run = run_lcdt(cfg, 5, rng);
  std::ostringstream os;
  write_slot_csv(os, run.slots);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "slot,action_code,decoded,avg_aoi,running_tau_bar,running_delta_bar,Q");
  int lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  CHECK(lines == 5);

  Rng again(2);
  std::ostringstream os2;
  write_slot_csv(os2, run_lcdt(cfg, 5, again).slots);
  CHECK(os.str() == os2.str());
}

}
