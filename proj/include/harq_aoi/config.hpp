#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace harq_aoi {

/// Model parameters of the multi-source HARQ status-update system.
///
/// Sources are laid out random-arrival first (indices 0..I-1), then
/// generate-at-will (I..K-1). All ages are in slots.
struct SystemConfig {
  int num_random_sources = 1;
  int num_gaw_sources = 1;
  // One entry per random source, or a single entry shared by all of them.
  std::vector<double> arrival_probs{0.7};
  double first_error_prob = 0.4;
  double harq_gain = 0.4;
  int max_attempts = 5;
  int aoi_cap = 18;
  double aoi_limit = 4.0;
  double dpp_weight = 30.0;
  std::uint64_t rng_seed = 1;
  // Allows Retransmit(k) while x_k = 0, i.e. before source k ever sent a
  // packet. The memory then acts as if it held a packet of age delta^p.
  bool allow_retx_without_packet = true;

  int num_sources() const { return num_random_sources + num_gaw_sources; }
  bool is_random(int k) const { return k < num_random_sources; }
  /// lambda_k for random sources, 1 for generate-at-will sources.
  double arrival_prob(int k) const;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// Parameters of the bisection / RVIA pipeline and of policy evaluation.
struct SolverConfig {
  double beta_upper = 1.0;
  double beta_lower = 0.0;
  double bisection_tol = 0.005;  // kappa
  double rvia_tol = 0.01;        // epsilon
  int rvia_max_iterations = 100000;
  // 1 runs the plain synchronous recursion; values below 1 mix in a
  // self-loop (P' = a P + (1-a) I), which leaves optimal policies and the
  // gain unchanged but removes periodic oscillation of h.
  double rvia_aperiodicity = 1.0;
  double beta_expansion_cap = 1048576.0;  // 2^20
  std::size_t max_states = 4'000'000;
  std::size_t exact_eval_max_states = 500'000;
  std::size_t direct_solve_max_states = 20'000;
  double stationary_tol = 1e-10;
  int stationary_max_iterations = 2'000'000;
  std::uint64_t mc_horizon = 1'000'000;
  std::uint64_t mc_seed = 20240101;
};

/// Deep Q-learning hyperparameters.
struct TrainConfig {
  std::vector<int> hidden_layers{64, 64};
  double learning_rate = 1e-3;
  double discount = 0.99;
  int batch_size = 32;
  std::size_t replay_capacity = 100'000;
  int steps_per_episode = 1000;
  int episodes = 300;
  int learning_starts = 1000;
  int target_sync_steps = 500;
  double target_soft_rate = 0.0;  // 0 selects hard copies every target_sync_steps
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;
  double queue_feature_scale = 4.0;  // Q is divided by this times aoi_cap
  double reward_scale = 0.01;

  void validate() const;
};

/// Simulation and sweep settings shared by the CLI subcommands.
struct ExperimentConfig {
  std::uint64_t horizon = 100'000;
  int num_seeds = 10;
  double burn_in_fraction = 0.1;
  int threads = 1;
  std::string controller = "lcdt";
  std::string sweep_param = "aoi_limit";
  std::vector<double> sweep_values{};
  std::vector<std::string> sweep_controllers{"lcdt"};

  /// rng_seed, rng_seed + 1, ...
  std::vector<std::uint64_t> seed_list(std::uint64_t base) const;
};

struct ToolkitConfig {
  SystemConfig system;
  SolverConfig solver;
  TrainConfig train;
  ExperimentConfig experiment;
};

/// Parses flat `key = value` text (TOML subset: `#` comments, optional
/// quotes, lists as `a, b` or `[a, b]`) on top of the defaults.
ToolkitConfig parse_config(std::string_view text);
ToolkitConfig load_config(const std::filesystem::path& path);

/// Sets one key; throws ConfigError listing the valid keys if unknown.
void set_config_value(ToolkitConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const ToolkitConfig& cfg, std::string_view key);

/// Every key in canonical order, one `key = value` line each. Parsing the
/// dump reproduces the configuration exactly.
std::string dump_config(const ToolkitConfig& cfg);
std::vector<std::string> config_keys();
/// The keys of the system section only.
std::vector<std::string> system_config_keys();

/// FNV-1a over the canonical dump of the system section.
std::uint64_t config_hash(const SystemConfig& cfg);

}  // namespace harq_aoi
