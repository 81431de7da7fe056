#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "harq_aoi/cmdp.hpp"
#include "harq_aoi/config.hpp"
#include "harq_aoi/dql.hpp"
#include "harq_aoi/errors.hpp"
#include "harq_aoi/eval.hpp"
#include "harq_aoi/lyapunov.hpp"
#include "harq_aoi/policy_io.hpp"
#include "harq_aoi/state_space.hpp"
#include "harq_aoi/verify.hpp"

namespace fs = std::filesystem;
using namespace harq_aoi;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitVerifyFailed = 4;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> horizon;
  std::optional<int> threads;
  std::string controller;
  std::vector<std::string> sets;
  std::string policy_path;
  std::string network_path;
  bool series = false;
};

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

ToolkitConfig resolve_config(const Options& o) {
  ToolkitConfig cfg = o.config_path.empty() ? ToolkitConfig{} : load_config(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.system.rng_seed = *o.seed;
  if (o.horizon) cfg.experiment.horizon = *o.horizon;
  if (o.threads) {
    cfg.experiment.threads = *o.threads;
  } else if (const char* env = std::getenv("HARQ_AOI_THREADS"); env && *env) {
    set_config_value(cfg, "threads", env);
  }
  if (!o.controller.empty()) cfg.experiment.controller = o.controller;
  cfg.system.validate();
  cfg.train.validate();
  if (cfg.experiment.threads < 1) throw ConfigError("threads must be >= 1");
  if (cfg.experiment.num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

// The manifest is itself a loadable config file; the command line is kept
// as comments.
void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& argv,
                    const ToolkitConfig& cfg, const Options& o) {
  auto os = open_out(out / "manifest.toml");
  os << "# harq_aoi run manifest\n";
  os << "# command: " << command << '\n';
  os << "# argv:";
  for (const auto& a : argv) os << ' ' << a;
  os << '\n';
  os << "# seed: " << cfg.system.rng_seed << '\n';
  os << "# system_config_hash: " << std::hex << config_hash(cfg.system) << std::dec << '\n';
  if (!o.policy_path.empty()) os << "# policy: " << o.policy_path << '\n';
  if (!o.network_path.empty()) os << "# network: " << o.network_path << '\n';
  os << "# rerun: harq_aoi " << command << " --config " << (out / "manifest.toml").string() << " --out <dir>\n";
  os << dump_config(cfg);
}

void print_metrics(const RunMetrics& m) {
  std::cout << m.controller << ": tau_bar = " << num(m.tau_bar) << " +- " << num(m.tau_ci)
            << ", delta_bar = " << num(m.delta_bar) << " +- " << num(m.delta_ci) << " (" << m.per_seed.size()
            << " seeds, horizon " << m.horizon << ", burn-in " << m.burn_in << ")\n";
}

SimOptions sim_options(const ToolkitConfig& cfg, bool series) {
  SimOptions opt;
  opt.horizon = cfg.experiment.horizon;
  opt.seeds = cfg.experiment.seed_list(cfg.system.rng_seed);
  opt.burn_in_fraction = cfg.experiment.burn_in_fraction;
  opt.threads = cfg.experiment.threads;
  opt.record_series = series;
  return opt;
}

int cmd_solve_cmdp(const ToolkitConfig& cfg, const fs::path& out) {
  const auto space = StateSpace::enumerate(cfg.system, cfg.solver.max_states);
  std::cout << "state space: " << space.size() << " states, " << space.transitions().num_pairs()
            << " state-action pairs\n";
  const auto solved = bisection_solve(space, cfg.solver);

  write_policy(out / "policy_feasible.txt", make_policy_file(solved.feasible, cfg.system, "feasible"));
  write_policy(out / "policy_lower_bound.txt", make_policy_file(solved.lower_bound, cfg.system, "lower_bound"));
  {
    auto os = open_out(out / "bisection_trace.csv");
    os << "step,beta,gain,tau_bar,delta_bar,feasible,rvia_iterations\n";
    for (std::size_t i = 0; i < solved.trace.size(); ++i) {
      const auto& s = solved.trace[i];
      os << i << ',' << num(s.beta) << ',' << num(s.gain) << ',' << num(s.tau_bar) << ',' << num(s.delta_bar) << ','
         << (s.feasible ? 1 : 0) << ',' << s.rvia_iterations << '\n';
    }
  }
  {
    auto os = open_out(out / "solution.txt");
    os << "num_states = " << space.size() << '\n';
    os << "eval_mode = " << to_string(solved.eval_mode) << '\n';
    os << "beta_tilde = " << num(solved.beta_tilde) << '\n';
    os << "beta_lower = " << num(solved.beta_lower) << '\n';
    os << "feasible_tau_bar = " << num(solved.feasible.evaluation.tau_bar) << '\n';
    os << "feasible_delta_bar = " << num(solved.feasible.evaluation.delta_bar) << '\n';
    os << "lower_bound_tau_bar = " << num(solved.lower_bound.evaluation.tau_bar) << '\n';
    os << "lower_bound_delta_bar = " << num(solved.lower_bound.evaluation.delta_bar) << '\n';
  }
  std::cout << "feasible policy:    beta = " << num(solved.feasible.beta)
            << ", tau_bar = " << num(solved.feasible.evaluation.tau_bar)
            << ", delta_bar = " << num(solved.feasible.evaluation.delta_bar) << '\n';
  std::cout << "lower-bound policy: beta = " << num(solved.lower_bound.beta)
            << ", tau_bar = " << num(solved.lower_bound.evaluation.tau_bar)
            << ", delta_bar = " << num(solved.lower_bound.evaluation.delta_bar) << '\n';
  return 0;
}

int cmd_run_lcdt(const ToolkitConfig& cfg, const fs::path& out) {
  Rng rng(cfg.system.rng_seed);
  const auto run = run_lcdt(cfg.system, cfg.experiment.horizon, rng);
  {
    auto os = open_out(out / "slots.csv");
    write_slot_csv(os, run.slots);
  }
  std::cout << "lcdt: tau_bar = " << num(run.tau_bar) << ", delta_bar = " << num(run.delta_bar)
            << ", mean Q = " << num(run.mean_queue) << " over " << cfg.experiment.horizon << " slots\n";
  return 0;
}

int cmd_train_dql(const ToolkitConfig& cfg, const fs::path& out) {
  Rng rng(cfg.system.rng_seed);
  auto result = train_dql(cfg.system, cfg.train, rng, [](const EpisodeStats& e) {
    if ((e.episode + 1) % 10 == 0)
      std::cout << "episode " << e.episode + 1 << ": return " << num(e.mean_return) << ", tau " << num(e.tau_bar)
                << ", delta " << num(e.delta_bar) << ", epsilon " << num(e.epsilon) << '\n';
  });
  save_checkpoint(result.network, out / "network.bin");
  {
    auto os = open_out(out / "learning_curve.csv");
    write_learning_curve_csv(os, result.curve);
  }
  std::cout << "trained: " << result.gradient_steps << " gradient steps, " << result.target_syncs
            << " target syncs\n";
  return 0;
}

std::unique_ptr<Controller> controller_for(const ToolkitConfig& cfg, const Options& o) {
  const auto& id = cfg.experiment.controller;
  if (id == "table") {
    if (o.policy_path.empty()) throw ConfigError("controller 'table' needs --policy <file>");
    const auto file = read_policy(o.policy_path);
    if (file.config_hash != config_hash(cfg.system))
      throw ConfigError("policy " + o.policy_path + " was solved for a different system configuration");
    auto space = std::make_shared<const StateSpace>(StateSpace::enumerate(cfg.system, cfg.solver.max_states));
    if (space->size() != file.actions.size())
      throw ConfigError("policy has " + std::to_string(file.actions.size()) + " states, configuration has " +
                        std::to_string(space->size()));
    return std::make_unique<TablePolicyController>(
        space, std::make_shared<const std::vector<std::uint16_t>>(file.actions), file.kind);
  }
  if (id == "dql" && !o.network_path.empty()) {
    auto net = std::make_shared<const QNetwork>(load_checkpoint(o.network_path));
    return std::make_unique<DqlController>(net, cfg.system, cfg.train);
  }
  return make_controller(id, cfg);
}

int cmd_eval_policy(const ToolkitConfig& cfg, const fs::path& out, const Options& o) {
  const auto ctrl = controller_for(cfg, o);
  const auto m = simulate(*ctrl, cfg.system, sim_options(cfg, o.series));
  SweepRow row;
  row.param_name = "none";
  row.controller = m.controller;
  row.tau_bar = m.tau_bar;
  row.tau_ci = m.tau_ci;
  row.delta_bar = m.delta_bar;
  row.delta_ci = m.delta_ci;
  row.feasible = m.delta_bar <= cfg.system.aoi_limit + m.delta_ci;
  row.seeds = m.per_seed.size();
  row.horizon = m.horizon;
  {
    auto os = open_out(out / "summary.csv");
    write_sweep_csv(os, {row});
  }
  {
    std::vector<SeedRow> seeds;
    for (const auto& s : m.per_seed) seeds.push_back({"none", 0.0, m.controller, s.seed, s.tau_bar, s.delta_bar});
    auto os = open_out(out / "per_seed.csv");
    write_seed_csv(os, seeds);
  }
  if (o.series) {
    auto os = open_out(out / "series.csv");
    os << "slot,running_tau_bar,running_delta_bar\n";
    for (std::size_t t = 0; t < m.running_tau.size(); ++t)
      os << t << ',' << num(m.running_tau[t]) << ',' << num(m.running_delta[t]) << '\n';
  }
  print_metrics(m);
  if (!row.feasible) std::cout << "warning: average AoI exceeds aoi_limit = " << num(cfg.system.aoi_limit) << '\n';
  return 0;
}

int cmd_sweep(const ToolkitConfig& cfg, const fs::path& out) {
  if (cfg.experiment.sweep_values.empty()) throw ConfigError("sweep needs sweep_values (e.g. --set sweep_values=3,4,5)");
  SweepSpec spec;
  spec.param = cfg.experiment.sweep_param;
  spec.values = cfg.experiment.sweep_values;
  spec.controllers = cfg.experiment.sweep_controllers;
  spec.base = cfg;
  spec.horizon = cfg.experiment.horizon;
  spec.seeds = cfg.experiment.seed_list(cfg.system.rng_seed);
  spec.burn_in_fraction = cfg.experiment.burn_in_fraction;
  spec.threads = cfg.experiment.threads;
  const auto result = run_sweep(spec);
  {
    auto os = open_out(out / "sweep.csv");
    write_sweep_csv(os, result.aggregate);
  }
  {
    auto os = open_out(out / "sweep_seeds.csv");
    write_seed_csv(os, result.per_seed);
  }
  for (const auto& r : result.aggregate) {
    std::cout << r.param_name << " = " << num(r.param_value) << ", " << r.controller << ": ";
    if (!r.note.empty())
      std::cout << r.note << '\n';
    else
      std::cout << "tau_bar " << num(r.tau_bar) << " +- " << num(r.tau_ci) << ", delta_bar " << num(r.delta_bar)
                << " +- " << num(r.delta_ci) << (r.feasible ? "" : " (violates aoi_limit)") << '\n';
  }
  return 0;
}

int cmd_verify(const ToolkitConfig& cfg, const fs::path& out) {
  const auto results = run_verification(cfg.system.rng_seed);
  auto os = open_out(out / "verify.txt");
  bool ok = true;
  for (const auto& r : results) {
    std::ostringstream line;
    line << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.samples << " samples, worst error " << r.worst;
    if (!r.passed && !r.detail.empty()) line << " (" << r.detail << ")";
    std::cout << line.str() << '\n';
    os << line.str() << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transmission scheduling for multi-source HARQ status updates under an average AoI limit"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;

  std::string keys = "Config keys:";
  for (const auto& k : config_keys()) keys += " " + k;
  app.footer(keys);

  app.add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", o.out_dir, "output directory (default runs/<command>)");
  app.add_option("--seed", o.seed, "base rng seed (overrides rng_seed)");
  app.add_option("--horizon", o.horizon, "simulation horizon in slots");
  app.add_option("--threads", o.threads, "worker threads (overrides HARQ_AOI_THREADS and the config)");
  app.add_option("--controller", o.controller, "cmdp, lower_bound, lcdt, baseline, idle, dql or table");
  app.add_option("--set", o.sets, "override a config key, key=value (repeatable)");

  auto* solve = app.add_subcommand("solve-cmdp", "solve the constrained MDP by bisection and relative value iteration");
  auto* lcdt = app.add_subcommand("run-lcdt", "simulate the drift-plus-penalty policy and log every slot");
  auto* train = app.add_subcommand("train-dql", "train the deep Q-network");
  auto* eval = app.add_subcommand("eval-policy", "simulate a controller over the configured seeds");
  eval->add_option("--policy", o.policy_path, "policy file for --controller table")->check(CLI::ExistingFile);
  eval->add_option("--network", o.network_path, "network checkpoint for --controller dql")->check(CLI::ExistingFile);
  eval->add_flag("--series", o.series, "also write seed-averaged running averages");
  auto* sweep = app.add_subcommand("sweep", "sweep one parameter over several controllers");
  auto* verify = app.add_subcommand("verify", "run the closed-form, kernel and gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const std::vector<std::string> args(argv + 1, argv + argc);

  try {
    const auto cfg = resolve_config(o);
    const fs::path out = o.out_dir.empty() ? fs::path("runs") / command : fs::path(o.out_dir);
    fs::create_directories(out);
    write_manifest(out, command, args, cfg, o);
    const auto start = std::chrono::steady_clock::now();
    int rc = 0;
    if (sub == solve)
      rc = cmd_solve_cmdp(cfg, out);
    else if (sub == lcdt)
      rc = cmd_run_lcdt(cfg, out);
    else if (sub == train)
      rc = cmd_train_dql(cfg, out);
    else if (sub == eval)
      rc = cmd_eval_policy(cfg, out, o);
    else if (sub == sweep)
      rc = cmd_sweep(cfg, out);
    else if (sub == verify)
      rc = cmd_verify(cfg, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << command << " finished in " << num(secs) << " s; outputs in " << out.string() << '\n';
    return rc;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << '\n';
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
