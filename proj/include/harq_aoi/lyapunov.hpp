#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/env.hpp"
#include "harq_aoi/rng.hpp"

namespace harq_aoi {

/// System state plus the virtual queue of the AoI constraint.
struct NetworkState {
  SystemState system;
  double queue = 0.0;
};

/// Q' = max(Q - aoi_limit + next_avg_aoi, 0).
double virtual_queue_update(double queue, double next_avg_aoi, double aoi_limit);

/// E[avg AoI of the next state | state, action] in closed form.
double expected_next_aoi(const NetworkState& o, const Action& a, const SystemConfig& cfg);

/// E[(avg AoI of the next state)^2 | state, action] in closed form,
/// including the k != k' cross terms.
double expected_next_aoi_sq(const NetworkState& o, const Action& a, const SystemConfig& cfg);

/// Per-slot drift-plus-penalty bound W_t, evaluated term by term with the
/// action's 0/1 indicators.
double dpp_objective(const NetworkState& o, const Action& a, const SystemConfig& cfg);

struct ActionChoice {
  Action action;
  double objective = 0.0;
  int evaluations = 0;
};

/// argmin of dpp_objective over the feasible actions; the first minimizer
/// in action-code order wins.
ActionChoice select_action(const NetworkState& o, const SystemConfig& cfg);

/// One row of the per-slot trace.
struct SlotRecord {
  std::uint64_t slot = 0;
  int action_code = 0;
  bool decoded = false;
  double avg_aoi = 0.0;
  double running_tau_bar = 0.0;
  double running_delta_bar = 0.0;
  double queue = 0.0;
};

struct LcdtRun {
  std::vector<SlotRecord> slots;
  double tau_bar = 0.0;
  double delta_bar = 0.0;
  double mean_queue = 0.0;
};

/// Runs the LC-DT controller for `horizon` slots from the all-zero state
/// with Q = 0. The state seen at slot t already contains that slot's
/// arrivals; the recorded avg_aoi is that of the state seen at slot t and
/// `queue` is Q_t before the update.
LcdtRun run_lcdt(const SystemConfig& cfg, std::uint64_t horizon, Rng& rng);

/// slot,action_code,decoded,avg_aoi,running_tau_bar,running_delta_bar,Q
void write_slot_csv(std::ostream& os, const std::vector<SlotRecord>& slots);

}  // namespace harq_aoi
