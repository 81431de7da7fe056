#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/env.hpp"

namespace harq_aoi {

/// Mixed-radix code of a SystemState; source k occupies digit k with radix
/// (aoi_cap + 1)^3 * (max_attempts + 1).
class StateCodec {
 public:
  explicit StateCodec(const SystemConfig& cfg);

  std::uint64_t encode(const SystemState& s) const;
  std::uint64_t encode_source(const SourceState& s) const;
  SystemState decode(std::uint64_t code) const;
  std::uint64_t source_radix() const { return radix_; }
  /// radix^k, the weight of source k's digit.
  std::uint64_t weight(int k) const { return weights_[static_cast<std::size_t>(k)]; }

 private:
  int cap_;
  int max_attempts_;
  int num_sources_;
  std::uint64_t radix_;
  std::vector<std::uint64_t> weights_;
};

/// Successor lists of every (state, feasible action) pair in CSR layout.
/// Pairs of state s are state_begin[s] .. state_begin[s+1]-1, listed in
/// action-code order; successors of pair p are pair_begin[p] ..
/// pair_begin[p+1]-1. Probabilities are interned in prob_values.
struct TransitionTable {
  std::vector<std::uint32_t> state_begin;
  std::vector<std::uint16_t> pair_action;
  std::vector<std::uint32_t> pair_begin;
  std::vector<std::int32_t> succ_target;
  std::vector<std::uint16_t> succ_prob;
  std::vector<double> prob_values;

  std::size_t num_pairs() const { return pair_action.size(); }
  std::size_t num_successors() const { return succ_target.size(); }
};

/// Reachable states from the all-zero state under any feasible action,
/// indexed in breadth-first order (the all-zero state is index 0 and serves
/// as the RVIA reference state).
class StateSpace {
 public:
  /// Throws ResourceError once more than max_states states are discovered.
  static StateSpace enumerate(const SystemConfig& cfg, std::size_t max_states);

  std::size_t size() const { return codes_.size(); }
  static constexpr std::size_t reference() { return 0; }

  const SystemConfig& config() const { return cfg_; }
  const StateCodec& codec() const { return codec_; }
  const TransitionTable& transitions() const { return table_; }

  SystemState state(std::size_t i) const { return codec_.decode(codes_[i]); }
  std::uint64_t code(std::size_t i) const { return codes_[i]; }
  std::optional<std::size_t> index_of(const SystemState& s) const;
  std::optional<std::size_t> index_of_code(std::uint64_t code) const;
  double avg_aoi(std::size_t i) const { return aoi_[i]; }
  std::span<const double> avg_aoi_values() const { return aoi_; }

  /// Index of the (state, action) pair, or nullopt if the action is not
  /// feasible in that state.
  std::optional<std::size_t> pair_index(std::size_t state, int action_code) const;

 private:
  StateSpace(const SystemConfig& cfg) : cfg_(cfg), codec_(cfg) {}

  SystemConfig cfg_;
  StateCodec codec_;
  std::vector<std::uint64_t> codes_;
  std::vector<double> aoi_;
  std::unordered_map<std::uint64_t, std::int32_t> index_;
  TransitionTable table_;
};

/// Free-function form of StateSpace::enumerate.
inline StateSpace enumerate_states(const SystemConfig& cfg, std::size_t max_states) {
  return StateSpace::enumerate(cfg, max_states);
}

}  // namespace harq_aoi
