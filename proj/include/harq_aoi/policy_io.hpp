#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "harq_aoi/cmdp.hpp"

namespace harq_aoi {

/// Text policy table, format version 1:
///
///   harq_aoi-policy 1
///   config_hash <16 hex digits>
///   kind <feasible|lower_bound>
///   beta <value>
///   tau_bar <value>
///   delta_bar <value>
///   eval_mode <exact|monte_carlo>
///   num_sources <K>
///   num_states <N>
///   actions
///   <state index> <action code>     (N lines, indices 0..N-1 in order)
///
/// State indices refer to the breadth-first enumeration of the state space
/// of the configuration whose hash is recorded.
struct PolicyFile {
  std::uint64_t config_hash = 0;
  std::string kind;
  double beta = 0.0;
  double tau_bar = 0.0;
  double delta_bar = 0.0;
  EvalMode eval_mode = EvalMode::exact;
  int num_sources = 0;
  std::vector<std::uint16_t> actions;
};

PolicyFile make_policy_file(const DeterministicPolicy& policy, const SystemConfig& cfg, const std::string& kind);
void write_policy(std::ostream& os, const PolicyFile& p);
void write_policy(const std::filesystem::path& path, const PolicyFile& p);
/// Throws Error on a malformed or unsupported file.
PolicyFile read_policy(std::istream& is);
PolicyFile read_policy(const std::filesystem::path& path);

}  // namespace harq_aoi
