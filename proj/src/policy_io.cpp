#include "harq_aoi/policy_io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "harq_aoi/errors.hpp"

namespace harq_aoi {

namespace {

constexpr int kVersion = 1;

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string expect_field(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line)) throw Error("policy file truncated before '" + key + "'");
  std::istringstream ls(line);
  std::string name, value;
  ls >> name >> value;
  if (name != key || value.empty()) throw Error("policy file: expected '" + key + " <value>', got '" + line + "'");
  return value;
}

template <class T>
T parse(const std::string& key, const std::string& text) {
  T v{};
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw Error("policy file: bad value '" + text + "' for " + key);
  return v;
}

}  // namespace

PolicyFile make_policy_file(const DeterministicPolicy& policy, const SystemConfig& cfg, const std::string& kind) {
  PolicyFile p;
  p.config_hash = config_hash(cfg);
  p.kind = kind;
  p.beta = policy.beta;
  p.tau_bar = policy.evaluation.tau_bar;
  p.delta_bar = policy.evaluation.delta_bar;
  p.eval_mode = policy.evaluation.mode;
  p.num_sources = cfg.num_sources();
  p.actions = policy.actions;
  return p;
}

void write_policy(std::ostream& os, const PolicyFile& p) {
  os << "harq_aoi-policy " << kVersion << '\n';
  os << "config_hash " << std::hex << std::setw(16) << std::setfill('0') << p.config_hash << std::dec
     << std::setfill(' ') << '\n';
  os << "kind " << p.kind << '\n';
  os << "beta " << shortest(p.beta) << '\n';
  os << "tau_bar " << shortest(p.tau_bar) << '\n';
  os << "delta_bar " << shortest(p.delta_bar) << '\n';
  os << "eval_mode " << to_string(p.eval_mode) << '\n';
  os << "num_sources " << p.num_sources << '\n';
  os << "num_states " << p.actions.size() << '\n';
  os << "actions\n";
  for (std::size_t i = 0; i < p.actions.size(); ++i) os << i << ' ' << p.actions[i] << '\n';
}

void write_policy(const std::filesystem::path& path, const PolicyFile& p) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_policy(os, p);
  if (!os) throw Error("failed writing " + path.string());
}

PolicyFile read_policy(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("empty policy file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != "harq_aoi-policy") throw Error("not a policy file");
    if (version != kVersion) throw Error("unsupported policy file version " + std::to_string(version));
  }
  PolicyFile p;
  const auto hash = expect_field(is, "config_hash");
  {
    auto r = std::from_chars(hash.data(), hash.data() + hash.size(), p.config_hash, 16);
    if (r.ec != std::errc{} || r.ptr != hash.data() + hash.size()) throw Error("policy file: bad config_hash");
  }
  p.kind = expect_field(is, "kind");
  p.beta = parse<double>("beta", expect_field(is, "beta"));
  p.tau_bar = parse<double>("tau_bar", expect_field(is, "tau_bar"));
  p.delta_bar = parse<double>("delta_bar", expect_field(is, "delta_bar"));
  const auto mode = expect_field(is, "eval_mode");
  if (mode == "exact")
    p.eval_mode = EvalMode::exact;
  else if (mode == "monte_carlo")
    p.eval_mode = EvalMode::monte_carlo;
  else
    throw Error("policy file: unknown eval_mode '" + mode + "'");
  p.num_sources = parse<int>("num_sources", expect_field(is, "num_sources"));
  const auto n = parse<std::size_t>("num_states", expect_field(is, "num_states"));
  if (!std::getline(is, line) || line != "actions") throw Error("policy file: missing 'actions' line");
  const int codes = 2 * p.num_sources + 1;
  p.actions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t index = 0;
    int code = -1;
    if (!(is >> index >> code)) throw Error("policy file truncated at entry " + std::to_string(i));
    if (index != i) throw Error("policy file: entry " + std::to_string(i) + " has index " + std::to_string(index));
    if (code < 0 || code >= codes) throw Error("policy file: action code out of range at entry " + std::to_string(i));
    p.actions.push_back(static_cast<std::uint16_t>(code));
  }
  return p;
}

PolicyFile read_policy(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_policy(is);
}

}  // namespace harq_aoi
