#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/rng.hpp"

namespace harq_aoi {

/// Per-source ages (slots) and the attempt counter of its under-process
/// packet. Reachable states satisfy fresh_age <= proc_age <= aoi <= aoi_cap.
struct SourceState {
  int fresh_age = 0;
  int proc_age = 0;
  int aoi = 0;
  int attempts = 0;

  friend bool operator==(const SourceState&, const SourceState&) = default;
};

struct SystemState {
  std::vector<SourceState> sources;

  static SystemState initial(const SystemConfig& cfg);
  int num_sources() const { return static_cast<int>(sources.size()); }

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

enum class ActionKind : std::uint8_t { idle, fresh, retransmit };

/// At most one transmission per slot. Sources are 0-based.
struct Action {
  ActionKind kind = ActionKind::idle;
  int source = -1;

  static Action idle() { return {}; }
  static Action fresh(int k) { return {ActionKind::fresh, k}; }
  static Action retransmit(int k) { return {ActionKind::retransmit, k}; }

  bool transmits() const { return kind != ActionKind::idle; }
  bool targets(int k) const { return transmits() && source == k; }

  friend bool operator==(const Action&, const Action&) = default;
};

/// Action codes: 0 = Idle, 1..K = Fresh(0..K-1), K+1..2K = Retx(0..K-1).
/// Code order is also the tie-break order of every argmin in the toolkit.
int action_code(const Action& a, int num_sources);
Action action_from_code(int code, int num_sources);
inline int num_action_codes(int num_sources) { return 2 * num_sources + 1; }
std::string to_string(const Action& a);
std::string to_string(const SystemState& s);

struct StepOutcome {
  SystemState next_state;
  bool decoded = false;
  std::vector<std::uint8_t> arrivals;  // one flag per random source
  int cost = 0;                        // 1 iff the action transmits
  double aoi_cost = 0.0;               // average AoI of next_state
};

/// f(x) = 1 - p0 * eta^(x-1) for 1 <= x <= max_attempts.
double decode_prob(int attempts, const SystemConfig& cfg);

bool is_feasible(const SystemState& s, const Action& a, const SystemConfig& cfg);

/// Idle, then Fresh(k) for all k, then Retx(k) where x_k + 1 <= x^max.
std::vector<Action> feasible_actions(const SystemState& s, const SystemConfig& cfg);

/// Deterministic one-slot update. `arrivals` holds the arrival flags of the
/// random sources at the start of the next slot. Throws
/// std::invalid_argument for an infeasible action, a decode while idle, or
/// an arrivals vector of the wrong length.
SystemState advance_ages(const SystemState& s, const Action& a, bool decoded,
                         std::span<const std::uint8_t> arrivals, const SystemConfig& cfg);

/// Samples the decode outcome (one draw, only when transmitting), then the
/// arrival of each random source in index order.
StepOutcome step(const SystemState& s, const Action& a, Rng& rng, const SystemConfig& cfg);

/// Exact successor distribution, factorized per source. Generate-at-will
/// sources use lambda = 1. Zero-probability branches are omitted and
/// coinciding branches are merged.
std::vector<std::pair<SystemState, double>> transition_kernel(const SystemState& s, const Action& a,
                                                              const SystemConfig& cfg);

double avg_aoi(const SystemState& s);

/// How an action touches one source.
enum class SourceRole : std::uint8_t { untouched, fresh, retransmit };

/// Successor distribution of a single source; at most four branches.
struct SourceBranches {
  std::array<std::pair<SourceState, double>, 4> items{};
  int count = 0;

  void add(const SourceState& s, double p);
  auto begin() const { return items.begin(); }
  auto end() const { return items.begin() + count; }
};

SourceBranches source_branches(const SourceState& s, SourceRole role, double arrival_prob,
                               const SystemConfig& cfg);

}  // namespace harq_aoi
