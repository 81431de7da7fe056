#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/config.hpp"
#include "harq_aoi/dql.hpp"
#include "harq_aoi/env.hpp"
#include "harq_aoi/lyapunov.hpp"
#include "harq_aoi/rng.hpp"
#include "harq_aoi/state_space.hpp"

namespace harq_aoi {

/// A per-slot decision maker. decide() sees the state of the current slot
/// (arrivals included); observe() is called with the outcome of the slot.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset() = 0;
  virtual Action decide(const SystemState& s, Rng& rng) = 0;
  virtual void observe(const SystemState& /*s*/, const Action& /*a*/, const StepOutcome& /*out*/) {}
  virtual std::unique_ptr<Controller> clone() const = 0;
};

/// Looks the state up in a solved policy table. LookupError if the state
/// is not in the table's state space.
class TablePolicyController : public Controller {
 public:
  TablePolicyController(std::shared_ptr<const StateSpace> space, std::shared_ptr<const std::vector<std::uint16_t>> actions,
                        std::string name = "table");
  std::string name() const override { return name_; }
  void reset() override {}
  Action decide(const SystemState& s, Rng& rng) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<TablePolicyController>(*this); }

 private:
  std::shared_ptr<const StateSpace> space_;
  std::shared_ptr<const std::vector<std::uint16_t>> actions_;
  std::string name_;
};

class LcdtController : public Controller {
 public:
  explicit LcdtController(const SystemConfig& cfg) : cfg_(cfg) {}
  std::string name() const override { return "lcdt"; }
  void reset() override { queue_ = 0.0; }
  Action decide(const SystemState& s, Rng& rng) override;
  void observe(const SystemState& s, const Action& a, const StepOutcome& out) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<LcdtController>(*this); }
  double queue() const { return queue_; }

 private:
  SystemConfig cfg_;
  double queue_ = 0.0;
};

/// Greedy action of a trained Q-network; tracks the virtual queue it needs
/// as an input feature.
class DqlController : public Controller {
 public:
  DqlController(std::shared_ptr<const QNetwork> net, const SystemConfig& cfg, const TrainConfig& train);
  std::string name() const override { return "dql"; }
  void reset() override { queue_ = 0.0; }
  Action decide(const SystemState& s, Rng& rng) override;
  void observe(const SystemState& s, const Action& a, const StepOutcome& out) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<DqlController>(*this); }

 private:
  std::shared_ptr<const QNetwork> net_;
  SystemConfig cfg_;
  TrainConfig train_;
  double queue_ = 0.0;
};

/// Source whose last transmission failed and is still being retransmitted,
/// or -1.
struct BaselineContext {
  int pending_source = -1;
};

/// Persistent retransmission of a failed packet while x < x^max; otherwise
/// a fresh packet from the largest-AoI source (uniform among ties) once the
/// average AoI reaches aoi_limit; otherwise idle.
Action baseline_step(const SystemState& s, const SystemConfig& cfg, const BaselineContext& ctx, Rng& rng);

class BaselineController : public Controller {
 public:
  explicit BaselineController(const SystemConfig& cfg) : cfg_(cfg) {}
  std::string name() const override { return "baseline"; }
  void reset() override { ctx_ = {}; }
  Action decide(const SystemState& s, Rng& rng) override;
  void observe(const SystemState& s, const Action& a, const StepOutcome& out) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<BaselineController>(*this); }

 private:
  SystemConfig cfg_;
  BaselineContext ctx_;
};

class IdleController : public Controller {
 public:
  std::string name() const override { return "idle"; }
  void reset() override {}
  Action decide(const SystemState&, Rng&) override { return Action::idle(); }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<IdleController>(*this); }
};

struct SimOptions {
  std::uint64_t horizon = 100'000;
  std::vector<std::uint64_t> seeds{1};
  double burn_in_fraction = 0.1;
  int threads = 1;
  bool record_series = false;  // seed-averaged running averages per slot
  int batches = 20;            // batch means when only one seed is given
};

struct SeedResult {
  std::uint64_t seed = 0;
  double tau_bar = 0.0;    // after burn-in
  double delta_bar = 0.0;  // after burn-in
};

struct RunMetrics {
  std::string controller;
  std::vector<SeedResult> per_seed;
  double tau_bar = 0.0;
  double tau_ci = 0.0;
  double delta_bar = 0.0;
  double delta_ci = 0.0;
  std::vector<double> running_tau;    // (1/t) sum over the full run, averaged over seeds
  std::vector<double> running_delta;
  std::uint64_t horizon = 0;
  std::uint64_t burn_in = 0;
  SystemConfig config;
};

/// Independent rollouts from the all-zero state, one per seed, each with
/// its own rng and controller clone. Averages exclude the burn-in slots;
/// halfwidths are 95% Student-t across seeds, or across batch means of the
/// post-burn-in slots when a single seed is given. Results do not depend
/// on the thread count.
RunMetrics simulate(const Controller& controller, const SystemConfig& cfg, const SimOptions& options);

struct SweepSpec {
  std::string param;  // a system key, or num_sources (split as I = K / 2, J = K - I)
  std::vector<double> values;
  std::vector<std::string> controllers;  // cmdp, lower_bound, lcdt, baseline, idle, dql
  ToolkitConfig base;
  std::uint64_t horizon = 100'000;
  std::vector<std::uint64_t> seeds{1};
  double burn_in_fraction = 0.1;
  int threads = 1;
};

struct SweepRow {
  std::string param_name;
  double param_value = 0.0;
  std::string controller;
  double tau_bar = 0.0;
  double tau_ci = 0.0;
  double delta_bar = 0.0;
  double delta_ci = 0.0;
  bool feasible = false;
  std::size_t seeds = 0;
  std::uint64_t horizon = 0;
  std::string note;
};

struct SeedRow {
  std::string param_name;
  double param_value = 0.0;
  std::string controller;
  std::uint64_t seed = 0;
  double tau_bar = 0.0;
  double delta_bar = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> aggregate;
  std::vector<SeedRow> per_seed;
};

/// Applies one sweep value to a copy of the configuration.
ToolkitConfig apply_sweep_value(const ToolkitConfig& base, const std::string& param, double value);

/// Builds the named controller for a configuration. cmdp and lower_bound
/// solve the bisection first and throw InfeasibleError when it fails; dql
/// trains a network.
std::unique_ptr<Controller> make_controller(const std::string& id, const ToolkitConfig& cfg);
std::vector<std::string> controller_ids();

/// An infeasible bisection yields a row with NaN metrics, feasible = 0 and
/// a note, instead of an exception.
SweepResult run_sweep(const SweepSpec& spec);

/// param_name,param_value,controller,tau_bar,tau_ci,delta_bar,delta_ci,feasible,seeds,horizon
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// param_name,param_value,controller,seed,tau_bar,delta_bar
void write_seed_csv(std::ostream& os, const std::vector<SeedRow>& rows);

/// Mean wall-clock seconds per decide() call over the given states.
double decision_latency(Controller& controller, const std::vector<SystemState>& states, int repeats, Rng& rng);

}  // namespace harq_aoi
