#include "harq_aoi/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "harq_aoi/errors.hpp"

namespace harq_aoi {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string_view unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) +
                    "': expected " + std::string(what));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const auto s = unquote(text);
  T out{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, text, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto s = unquote(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, text, "true or false");
}

std::vector<std::string_view> split_list(std::string_view text) {
  auto s = trim(text);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated list: " + std::string(text));
    s = trim(s.substr(1, s.size() - 2));
  }
  std::vector<std::string_view> items;
  if (s.empty()) return items;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    items.push_back(unquote(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  for (auto item : split_list(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
std::string format_number(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
std::string format_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, std::string>) {
      out += values[i];
    } else {
      out += format_number(values[i]);
    }
  }
  return out;
}

enum class Section { system, solver, train, experiment };

struct KeySpec {
  std::string name;
  Section section;
  std::function<void(ToolkitConfig&, std::string_view)> set;
  std::function<std::string(const ToolkitConfig&)> get;
};

#define HARQ_NUMBER_KEY(section_enum, member, field)                                              \
  KeySpec {                                                                                       \
    #field, Section::section_enum,                                                                \
        [](ToolkitConfig& c, std::string_view v) {                                                \
          c.member.field = parse_number<std::decay_t<decltype(c.member.field)>>(#field, v);       \
        },                                                                                        \
        [](const ToolkitConfig& c) { return format_number(c.member.field); }                      \
  }

const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = {
      HARQ_NUMBER_KEY(system, system, num_random_sources),
      HARQ_NUMBER_KEY(system, system, num_gaw_sources),
      KeySpec{"arrival_probs", Section::system,
              [](ToolkitConfig& c, std::string_view v) {
                c.system.arrival_probs = parse_list<double>("arrival_probs", v);
              },
              [](const ToolkitConfig& c) { return format_list(c.system.arrival_probs); }},
      HARQ_NUMBER_KEY(system, system, first_error_prob),
      HARQ_NUMBER_KEY(system, system, harq_gain),
      HARQ_NUMBER_KEY(system, system, max_attempts),
      HARQ_NUMBER_KEY(system, system, aoi_cap),
      HARQ_NUMBER_KEY(system, system, aoi_limit),
      HARQ_NUMBER_KEY(system, system, dpp_weight),
      HARQ_NUMBER_KEY(system, system, rng_seed),
      KeySpec{"allow_retx_without_packet", Section::system,
              [](ToolkitConfig& c, std::string_view v) {
                c.system.allow_retx_without_packet = parse_bool("allow_retx_without_packet", v);
              },
              [](const ToolkitConfig& c) {
                return std::string(c.system.allow_retx_without_packet ? "true" : "false");
              }},

      HARQ_NUMBER_KEY(solver, solver, beta_upper),
      HARQ_NUMBER_KEY(solver, solver, beta_lower),
      HARQ_NUMBER_KEY(solver, solver, bisection_tol),
      HARQ_NUMBER_KEY(solver, solver, rvia_tol),
      HARQ_NUMBER_KEY(solver, solver, rvia_max_iterations),
      HARQ_NUMBER_KEY(solver, solver, rvia_aperiodicity),
      HARQ_NUMBER_KEY(solver, solver, beta_expansion_cap),
      HARQ_NUMBER_KEY(solver, solver, max_states),
      HARQ_NUMBER_KEY(solver, solver, exact_eval_max_states),
      HARQ_NUMBER_KEY(solver, solver, direct_solve_max_states),
      HARQ_NUMBER_KEY(solver, solver, stationary_tol),
      HARQ_NUMBER_KEY(solver, solver, stationary_max_iterations),
      HARQ_NUMBER_KEY(solver, solver, mc_horizon),
      HARQ_NUMBER_KEY(solver, solver, mc_seed),

      KeySpec{"hidden_layers", Section::train,
              [](ToolkitConfig& c, std::string_view v) {
                c.train.hidden_layers = parse_list<int>("hidden_layers", v);
              },
              [](const ToolkitConfig& c) { return format_list(c.train.hidden_layers); }},
      HARQ_NUMBER_KEY(train, train, learning_rate),
      HARQ_NUMBER_KEY(train, train, discount),
      HARQ_NUMBER_KEY(train, train, batch_size),
      HARQ_NUMBER_KEY(train, train, replay_capacity),
      HARQ_NUMBER_KEY(train, train, steps_per_episode),
      HARQ_NUMBER_KEY(train, train, episodes),
      HARQ_NUMBER_KEY(train, train, learning_starts),
      HARQ_NUMBER_KEY(train, train, target_sync_steps),
      HARQ_NUMBER_KEY(train, train, target_soft_rate),
      HARQ_NUMBER_KEY(train, train, epsilon_start),
      HARQ_NUMBER_KEY(train, train, epsilon_end),
      HARQ_NUMBER_KEY(train, train, epsilon_decay_fraction),
      HARQ_NUMBER_KEY(train, train, queue_feature_scale),
      HARQ_NUMBER_KEY(train, train, reward_scale),

      HARQ_NUMBER_KEY(experiment, experiment, horizon),
      HARQ_NUMBER_KEY(experiment, experiment, num_seeds),
      HARQ_NUMBER_KEY(experiment, experiment, burn_in_fraction),
      HARQ_NUMBER_KEY(experiment, experiment, threads),
      KeySpec{"controller", Section::experiment,
              [](ToolkitConfig& c, std::string_view v) { c.experiment.controller = unquote(v); },
              [](const ToolkitConfig& c) { return c.experiment.controller; }},
      KeySpec{"sweep_param", Section::experiment,
              [](ToolkitConfig& c, std::string_view v) { c.experiment.sweep_param = unquote(v); },
              [](const ToolkitConfig& c) { return c.experiment.sweep_param; }},
      KeySpec{"sweep_values", Section::experiment,
              [](ToolkitConfig& c, std::string_view v) {
                c.experiment.sweep_values = parse_list<double>("sweep_values", v);
              },
              [](const ToolkitConfig& c) { return format_list(c.experiment.sweep_values); }},
      KeySpec{"sweep_controllers", Section::experiment,
              [](ToolkitConfig& c, std::string_view v) {
                c.experiment.sweep_controllers.clear();
                for (auto item : split_list(v)) c.experiment.sweep_controllers.emplace_back(item);
              },
              [](const ToolkitConfig& c) { return format_list(c.experiment.sweep_controllers); }},
  };
  return keys;
}

#undef HARQ_NUMBER_KEY

const KeySpec& find_key(std::string_view key) {
  const auto& keys = registry();
  auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& k) { return k.name == key; });
  if (it == keys.end()) {
    std::string msg = "unknown config key '" + std::string(key) + "'; valid keys:";
    for (const auto& k : keys) msg += " " + k.name;
    throw ConfigError(msg);
  }
  return *it;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double SystemConfig::arrival_prob(int k) const {
  if (!is_random(k)) return 1.0;
  return arrival_probs.size() == 1 ? arrival_probs.front() : arrival_probs.at(static_cast<std::size_t>(k));
}

void SystemConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (num_random_sources < 0 || num_gaw_sources < 0) fail("source counts must be non-negative");
  if (num_sources() < 1) fail("at least one source is required (num_random_sources + num_gaw_sources >= 1)");
  if (num_random_sources > 0) {
    const auto n = arrival_probs.size();
    if (n != 1 && n != static_cast<std::size_t>(num_random_sources))
      fail("arrival_probs needs 1 or num_random_sources entries, got " + std::to_string(n));
    for (double p : arrival_probs)
      if (!(p > 0.0 && p <= 1.0)) fail("arrival_probs entries must lie in (0, 1]");
  }
  if (!(first_error_prob >= 0.0 && first_error_prob <= 1.0)) fail("first_error_prob must lie in [0, 1]");
  if (!(harq_gain >= 0.0 && harq_gain <= 1.0)) fail("harq_gain must lie in [0, 1]");
  if (max_attempts < 1) fail("max_attempts must be >= 1");
  if (aoi_cap < 1) fail("aoi_cap must be >= 1");
  if (aoi_cap > 4096) fail("aoi_cap must be <= 4096");
  if (!(aoi_limit > 0.0)) fail("aoi_limit must be > 0");
  if (aoi_limit > aoi_cap) fail("aoi_limit must not exceed aoi_cap (the constraint would be vacuous)");
  if (!(dpp_weight > 0.0)) fail("dpp_weight must be > 0");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (hidden_layers.empty()) fail("hidden_layers must list at least one width");
  for (int w : hidden_layers)
    if (w < 1) fail("hidden_layers widths must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(discount > 0.0 && discount < 1.0)) fail("discount must lie in (0, 1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (replay_capacity < static_cast<std::size_t>(batch_size)) fail("replay_capacity must be >= batch_size");
  if (steps_per_episode < 1 || episodes < 1) fail("steps_per_episode and episodes must be >= 1");
  if (target_sync_steps < 1) fail("target_sync_steps must be >= 1");
  if (target_soft_rate < 0.0 || target_soft_rate > 1.0) fail("target_soft_rate must lie in [0, 1]");
  if (epsilon_decay_fraction <= 0.0) fail("epsilon_decay_fraction must be > 0");
  if (!(queue_feature_scale > 0.0)) fail("queue_feature_scale must be > 0");
  if (!(reward_scale > 0.0)) fail("reward_scale must be > 0");
}

std::vector<std::uint64_t> ExperimentConfig::seed_list(std::uint64_t base) const {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

void set_config_value(ToolkitConfig& cfg, std::string_view key, std::string_view value) {
  find_key(trim(key)).set(cfg, trim(value));
}

std::string get_config_value(const ToolkitConfig& cfg, std::string_view key) {
  return find_key(key).get(cfg);
}

ToolkitConfig parse_config(std::string_view text) {
  ToolkitConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    // '#' starts a comment unless quoted; values here never contain '#'.
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // TOML table headers are ignored
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    if (eol == text.size()) break;
  }
  return cfg;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ToolkitConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : registry()) names.push_back(k.name);
  return names;
}

std::vector<std::string> system_config_keys() {
  std::vector<std::string> names;
  for (const auto& k : registry())
    if (k.section == Section::system) names.push_back(k.name);
  return names;
}

std::uint64_t config_hash(const SystemConfig& system) {
  ToolkitConfig cfg;
  cfg.system = system;
  std::string text;
  for (const auto& k : registry())
    if (k.section == Section::system) text += k.name + " = " + k.get(cfg) + "\n";
  return fnv1a(text);
}

}  // namespace harq_aoi
