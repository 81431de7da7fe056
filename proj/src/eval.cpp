#include "harq_aoi/eval.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "harq_aoi/errors.hpp"
#include "harq_aoi/stats.hpp"

namespace harq_aoi {

TablePolicyController::TablePolicyController(std::shared_ptr<const StateSpace> space,
                                             std::shared_ptr<const std::vector<std::uint16_t>> actions,
                                             std::string name)
    : space_(std::move(space)), actions_(std::move(actions)), name_(std::move(name)) {
  if (!space_ || !actions_ || actions_->size() != space_->size())
    throw std::invalid_argument("policy table does not match its state space");
}

Action TablePolicyController::decide(const SystemState& s, Rng&) {
  const auto idx = space_->index_of(s);
  if (!idx) throw LookupError("state " + to_string(s) + " is not in the policy table");
  return action_from_code((*actions_)[*idx], s.num_sources());
}

Action LcdtController::decide(const SystemState& s, Rng&) {
  return select_action(NetworkState{s, queue_}, cfg_).action;
}

void LcdtController::observe(const SystemState&, const Action&, const StepOutcome& out) {
  queue_ = virtual_queue_update(queue_, out.aoi_cost, cfg_.aoi_limit);
}

DqlController::DqlController(std::shared_ptr<const QNetwork> net, const SystemConfig& cfg, const TrainConfig& train)
    : net_(std::move(net)), cfg_(cfg), train_(train) {
  const int K = cfg.num_sources();
  if (!net_ || net_->inputs() != feature_count(K) || net_->outputs() != num_action_codes(K))
    throw std::invalid_argument("network shape does not match " + std::to_string(K) + " sources");
}

Action DqlController::decide(const SystemState& s, Rng&) {
  const NetworkState o{s, queue_};
  const int code = greedy_action(net_->forward(featurize(o, cfg_, train_)), feasible_mask(s, cfg_));
  return action_from_code(code, s.num_sources());
}

void DqlController::observe(const SystemState&, const Action&, const StepOutcome& out) {
  queue_ = virtual_queue_update(queue_, out.aoi_cost, cfg_.aoi_limit);
}

Action baseline_step(const SystemState& s, const SystemConfig& cfg, const BaselineContext& ctx, Rng& rng) {
  if (ctx.pending_source >= 0) {
    const auto k = ctx.pending_source;
    if (s.sources[static_cast<std::size_t>(k)].attempts < cfg.max_attempts) return Action::retransmit(k);
  }
  if (avg_aoi(s) < cfg.aoi_limit) return Action::idle();
  int top = -1;
  std::vector<int> ties;
  for (int k = 0; k < s.num_sources(); ++k) {
    const int aoi = s.sources[static_cast<std::size_t>(k)].aoi;
    if (aoi > top) {
      top = aoi;
      ties.assign(1, k);
    } else if (aoi == top) {
      ties.push_back(k);
    }
  }
  const int pick = ties.size() == 1 ? ties.front() : ties[uniform_index(rng, ties.size())];
  return Action::fresh(pick);
}

Action BaselineController::decide(const SystemState& s, Rng& rng) { return baseline_step(s, cfg_, ctx_, rng); }

void BaselineController::observe(const SystemState&, const Action& a, const StepOutcome& out) {
  ctx_.pending_source = a.transmits() && !out.decoded ? a.source : -1;
}

namespace {

struct SeedRun {
  SeedResult result;
  std::vector<double> tau_batches, delta_batches;
  std::vector<double> running_tau, running_delta;
};

SeedRun run_seed(const Controller& proto, const SystemConfig& cfg, const SimOptions& opt, std::uint64_t seed,
                 std::uint64_t burn_in, bool batches) {
  auto ctrl = proto.clone();
  ctrl->reset();
  Rng rng(seed);
  SystemState s = SystemState::initial(cfg);
  SeedRun run;
  run.result.seed = seed;
  if (opt.record_series) {
    run.running_tau.reserve(opt.horizon);
    run.running_delta.reserve(opt.horizon);
  }
  const std::uint64_t kept = opt.horizon - burn_in;
  const std::uint64_t batch_len = batches ? kept / static_cast<std::uint64_t>(opt.batches) : 0;
  double sends = 0.0, aoi = 0.0, all_sends = 0.0, all_aoi = 0.0, bt = 0.0, bd = 0.0;
  std::uint64_t in_batch = 0;

  for (std::uint64_t t = 0; t < opt.horizon; ++t) {
    const Action a = ctrl->decide(s, rng);
    auto out = step(s, a, rng, cfg);
    ctrl->observe(s, a, out);
    const double c = a.transmits() ? 1.0 : 0.0;
    const double d = avg_aoi(s);
    all_sends += c;
    all_aoi += d;
    if (opt.record_series) {
      run.running_tau.push_back(all_sends / static_cast<double>(t + 1));
      run.running_delta.push_back(all_aoi / static_cast<double>(t + 1));
    }
    if (t >= burn_in) {
      sends += c;
      aoi += d;
      if (batch_len > 0 && run.tau_batches.size() < static_cast<std::size_t>(opt.batches)) {
        bt += c;
        bd += d;
        if (++in_batch == batch_len) {
          run.tau_batches.push_back(bt / static_cast<double>(batch_len));
          run.delta_batches.push_back(bd / static_cast<double>(batch_len));
          bt = bd = 0.0;
          in_batch = 0;
        }
      }
    }
    s = std::move(out.next_state);
  }
  run.result.tau_bar = sends / static_cast<double>(kept);
  run.result.delta_bar = aoi / static_cast<double>(kept);
  return run;
}

}  // namespace

RunMetrics simulate(const Controller& controller, const SystemConfig& cfg, const SimOptions& options) {
  cfg.validate();
  if (options.horizon == 0) throw std::invalid_argument("simulate: horizon must be >= 1");
  if (options.seeds.empty()) throw std::invalid_argument("simulate: at least one seed is required");
  if (!(options.burn_in_fraction >= 0.0 && options.burn_in_fraction < 1.0))
    throw std::invalid_argument("simulate: burn_in_fraction must lie in [0, 1)");

  const auto burn_in = static_cast<std::uint64_t>(std::floor(options.burn_in_fraction * options.horizon));
  const bool single = options.seeds.size() == 1;
  const bool batches = single && options.batches >= 2 &&
                       options.horizon - burn_in >= static_cast<std::uint64_t>(options.batches);
  std::vector<SeedRun> runs(options.seeds.size());

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(runs.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < runs.size();) {
      try {
        runs[i] = run_seed(controller, cfg, options, options.seeds[i], burn_in, batches);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  RunMetrics m;
  m.controller = controller.name();
  m.horizon = options.horizon;
  m.burn_in = burn_in;
  m.config = cfg;
  std::vector<double> taus, deltas;
  for (const auto& r : runs) {
    m.per_seed.push_back(r.result);
    taus.push_back(r.result.tau_bar);
    deltas.push_back(r.result.delta_bar);
  }
  const auto tau = mean_ci95(taus);
  const auto delta = mean_ci95(deltas);
  m.tau_bar = tau.mean;
  m.delta_bar = delta.mean;
  if (batches) {
    m.tau_ci = mean_ci95(runs.front().tau_batches).halfwidth;
    m.delta_ci = mean_ci95(runs.front().delta_batches).halfwidth;
  } else {
    m.tau_ci = tau.halfwidth;
    m.delta_ci = delta.halfwidth;
  }
  if (options.record_series) {
    m.running_tau.assign(options.horizon, 0.0);
    m.running_delta.assign(options.horizon, 0.0);
    for (const auto& r : runs)
      for (std::uint64_t t = 0; t < options.horizon; ++t) {
        m.running_tau[t] += r.running_tau[t];
        m.running_delta[t] += r.running_delta[t];
      }
    const double n = static_cast<double>(runs.size());
    for (std::uint64_t t = 0; t < options.horizon; ++t) {
      m.running_tau[t] /= n;
      m.running_delta[t] /= n;
    }
  }
  return m;
}

namespace {

std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct SolvedTables {
  std::shared_ptr<const StateSpace> space;
  std::shared_ptr<const std::vector<std::uint16_t>> feasible, lower;
};

SolvedTables solve_tables(const ToolkitConfig& cfg) {
  auto space = std::make_shared<const StateSpace>(StateSpace::enumerate(cfg.system, cfg.solver.max_states));
  auto solved = bisection_solve(*space, cfg.solver);
  return {space, std::make_shared<const std::vector<std::uint16_t>>(std::move(solved.feasible.actions)),
          std::make_shared<const std::vector<std::uint16_t>>(std::move(solved.lower_bound.actions))};
}

}  // namespace

std::vector<std::string> controller_ids() { return {"cmdp", "lower_bound", "lcdt", "baseline", "idle", "dql"}; }

ToolkitConfig apply_sweep_value(const ToolkitConfig& base, const std::string& param, double value) {
  ToolkitConfig cfg = base;
  if (param == "num_sources") {
    if (value < 1 || value != std::floor(value)) throw ConfigError("num_sources sweep values must be positive integers");
    const int K = static_cast<int>(value);
    cfg.system.num_random_sources = K / 2;
    cfg.system.num_gaw_sources = K - K / 2;
    return cfg;
  }
  const auto keys = system_config_keys();
  if (std::find(keys.begin(), keys.end(), param) == keys.end()) {
    std::string msg = "cannot sweep '" + param + "'; valid parameters: num_sources";
    for (const auto& k : keys) msg += " " + k;
    throw ConfigError(msg);
  }
  set_config_value(cfg, param, format_value(value));
  return cfg;
}

std::unique_ptr<Controller> make_controller(const std::string& id, const ToolkitConfig& cfg) {
  if (id == "lcdt") return std::make_unique<LcdtController>(cfg.system);
  if (id == "baseline") return std::make_unique<BaselineController>(cfg.system);
  if (id == "idle") return std::make_unique<IdleController>();
  if (id == "cmdp" || id == "lower_bound") {
    auto t = solve_tables(cfg);
    return std::make_unique<TablePolicyController>(t.space, id == "cmdp" ? t.feasible : t.lower, id);
  }
  if (id == "dql") {
    Rng rng(cfg.system.rng_seed);
    auto trained = train_dql(cfg.system, cfg.train, rng);
    return std::make_unique<DqlController>(std::make_shared<const QNetwork>(std::move(trained.network)), cfg.system,
                                           cfg.train);
  }
  std::string msg = "unknown controller '" + id + "'; valid:";
  for (const auto& c : controller_ids()) msg += " " + c;
  throw ConfigError(msg);
}

SweepResult run_sweep(const SweepSpec& spec) {
  const auto ids = controller_ids();
  for (const auto& c : spec.controllers) {
    if (std::find(ids.begin(), ids.end(), c) != ids.end()) continue;
    std::string msg = "unknown controller '" + c + "'; valid:";
    for (const auto& id : ids) msg += " " + id;
    throw ConfigError(msg);
  }
  SweepResult out;
  SimOptions opt;
  opt.horizon = spec.horizon;
  opt.seeds = spec.seeds;
  opt.burn_in_fraction = spec.burn_in_fraction;
  opt.threads = spec.threads;

  for (double value : spec.values) {
    const ToolkitConfig cfg = apply_sweep_value(spec.base, spec.param, value);
    cfg.system.validate();
    std::optional<SolvedTables> tables;
    std::string infeasible;

    for (const auto& id : spec.controllers) {
      SweepRow row;
      row.param_name = spec.param;
      row.param_value = value;
      row.controller = id;
      row.seeds = spec.seeds.size();
      row.horizon = spec.horizon;
      std::unique_ptr<Controller> ctrl;
      if (id == "cmdp" || id == "lower_bound") {
        if (!tables && infeasible.empty()) {
          try {
            tables = solve_tables(cfg);
          } catch (const InfeasibleError& e) {
            infeasible = e.what();
          }
        }
        if (!tables) {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          row.tau_bar = row.tau_ci = row.delta_bar = row.delta_ci = nan;
          row.feasible = false;
          row.note = infeasible;
          out.aggregate.push_back(row);
          continue;
        }
        ctrl = std::make_unique<TablePolicyController>(tables->space, id == "cmdp" ? tables->feasible : tables->lower,
                                                       id);
      } else {
        ctrl = make_controller(id, cfg);
      }
      const auto m = simulate(*ctrl, cfg.system, opt);
      row.tau_bar = m.tau_bar;
      row.tau_ci = m.tau_ci;
      row.delta_bar = m.delta_bar;
      row.delta_ci = m.delta_ci;
      row.feasible = m.delta_bar <= cfg.system.aoi_limit + m.delta_ci;
      out.aggregate.push_back(row);
      for (const auto& s : m.per_seed) out.per_seed.push_back({spec.param, value, id, s.seed, s.tau_bar, s.delta_bar});
    }
  }
  return out;
}

namespace {

void put(std::ostream& os, double v) {
  if (std::isnan(v))
    os << "nan";
  else
    os << format_value(v);
}

}  // namespace

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "param_name,param_value,controller,tau_bar,tau_ci,delta_bar,delta_ci,feasible,seeds,horizon\n";
  for (const auto& r : rows) {
    os << r.param_name << ',';
    put(os, r.param_value);
    os << ',' << r.controller << ',';
    put(os, r.tau_bar);
    os << ',';
    put(os, r.tau_ci);
    os << ',';
    put(os, r.delta_bar);
    os << ',';
    put(os, r.delta_ci);
    os << ',' << (r.feasible ? 1 : 0) << ',' << r.seeds << ',' << r.horizon << '\n';
  }
}

void write_seed_csv(std::ostream& os, const std::vector<SeedRow>& rows) {
  os << "param_name,param_value,controller,seed,tau_bar,delta_bar\n";
  for (const auto& r : rows) {
    os << r.param_name << ',';
    put(os, r.param_value);
    os << ',' << r.controller << ',' << r.seed << ',';
    put(os, r.tau_bar);
    os << ',';
    put(os, r.delta_bar);
    os << '\n';
  }
}

double decision_latency(Controller& controller, const std::vector<SystemState>& states, int repeats, Rng& rng) {
  if (states.empty() || repeats < 1) throw std::invalid_argument("decision_latency needs states and repeats >= 1");
  volatile int sink = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r)
    for (const auto& s : states) sink = sink + static_cast<int>(controller.decide(s, rng).kind);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / (static_cast<double>(repeats) * states.size());
}

}  // namespace harq_aoi
