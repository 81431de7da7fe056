#include "harq_aoi/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace harq_aoi {

namespace {

int capped_inc(int age, int cap) { return std::min(age + 1, cap); }

SourceRole role_of(const Action& a, int k) {
  if (!a.targets(k)) return SourceRole::untouched;
  return a.kind == ActionKind::fresh ? SourceRole::fresh : SourceRole::retransmit;
}

void require_feasible(const SystemState& s, const Action& a, const SystemConfig& cfg) {
  if (!is_feasible(s, a, cfg)) throw std::invalid_argument("infeasible action " + to_string(a) + " in state " + to_string(s));
}

}  // namespace

SystemState SystemState::initial(const SystemConfig& cfg) {
  return SystemState{std::vector<SourceState>(static_cast<std::size_t>(cfg.num_sources()))};
}

int action_code(const Action& a, int num_sources) {
  switch (a.kind) {
    case ActionKind::idle:
      return 0;
    case ActionKind::fresh:
      return 1 + a.source;
    case ActionKind::retransmit:
      return 1 + num_sources + a.source;
  }
  return 0;
}

Action action_from_code(int code, int num_sources) {
  if (code < 0 || code >= num_action_codes(num_sources))
    throw std::out_of_range("action code " + std::to_string(code) + " out of range");
  if (code == 0) return Action::idle();
  if (code <= num_sources) return Action::fresh(code - 1);
  return Action::retransmit(code - 1 - num_sources);
}

std::string to_string(const Action& a) {
  switch (a.kind) {
    case ActionKind::idle:
      return "idle";
    case ActionKind::fresh:
      return "fresh(" + std::to_string(a.source) + ")";
    case ActionKind::retransmit:
      return "retx(" + std::to_string(a.source) + ")";
  }
  return "?";
}

std::string to_string(const SystemState& s) {
  std::string out = "[";
  for (std::size_t k = 0; k < s.sources.size(); ++k) {
    const auto& src = s.sources[k];
    if (k) out += " ";
    out += "(" + std::to_string(src.fresh_age) + "," + std::to_string(src.proc_age) + "," +
           std::to_string(src.aoi) + "," + std::to_string(src.attempts) + ")";
  }
  return out + "]";
}

double decode_prob(int attempts, const SystemConfig& cfg) {
  if (attempts < 1 || attempts > cfg.max_attempts)
    throw std::domain_error("decode_prob: attempts " + std::to_string(attempts) + " outside [1, " +
                            std::to_string(cfg.max_attempts) + "]");
  return 1.0 - cfg.first_error_prob * std::pow(cfg.harq_gain, attempts - 1);
}

bool is_feasible(const SystemState& s, const Action& a, const SystemConfig& cfg) {
  if (a.kind == ActionKind::idle) return true;
  if (a.source < 0 || a.source >= s.num_sources()) return false;
  if (a.kind == ActionKind::fresh) return true;
  const int x = s.sources[static_cast<std::size_t>(a.source)].attempts;
  if (x == 0 && !cfg.allow_retx_without_packet) return false;
  return x + 1 <= cfg.max_attempts;
}

std::vector<Action> feasible_actions(const SystemState& s, const SystemConfig& cfg) {
  const int K = s.num_sources();
  std::vector<Action> out;
  out.reserve(static_cast<std::size_t>(2 * K + 1));
  out.push_back(Action::idle());
  for (int k = 0; k < K; ++k) out.push_back(Action::fresh(k));
  for (int k = 0; k < K; ++k)
    if (is_feasible(s, Action::retransmit(k), cfg)) out.push_back(Action::retransmit(k));
  return out;
}

SystemState advance_ages(const SystemState& s, const Action& a, bool decoded,
                         std::span<const std::uint8_t> arrivals, const SystemConfig& cfg) {
  require_feasible(s, a, cfg);
  if (decoded && !a.transmits()) throw std::invalid_argument("advance_ages: decoded while idle");
  if (arrivals.size() != static_cast<std::size_t>(cfg.num_random_sources))
    throw std::invalid_argument("advance_ages: expected one arrival flag per random source");

  const int cap = cfg.aoi_cap;
  SystemState next = s;
  for (int k = 0; k < s.num_sources(); ++k) {
    const auto& cur = s.sources[static_cast<std::size_t>(k)];
    auto& nxt = next.sources[static_cast<std::size_t>(k)];
    const auto role = role_of(a, k);

    switch (role) {
      case SourceRole::fresh:
        nxt.attempts = 1;
        nxt.proc_age = capped_inc(cur.fresh_age, cap);
        nxt.aoi = decoded ? capped_inc(cur.fresh_age, cap) : capped_inc(cur.aoi, cap);
        break;
      case SourceRole::retransmit:
        nxt.attempts = cur.attempts + 1;
        nxt.proc_age = capped_inc(cur.proc_age, cap);
        nxt.aoi = decoded ? capped_inc(cur.proc_age, cap) : capped_inc(cur.aoi, cap);
        break;
      case SourceRole::untouched:
        nxt.proc_age = capped_inc(cur.proc_age, cap);
        nxt.aoi = capped_inc(cur.aoi, cap);
        break;
    }

    if (cfg.is_random(k)) {
      nxt.fresh_age = arrivals[static_cast<std::size_t>(k)] ? 0 : capped_inc(cur.fresh_age, cap);
    } else {
      nxt.fresh_age = 0;
    }
  }
  return next;
}

StepOutcome step(const SystemState& s, const Action& a, Rng& rng, const SystemConfig& cfg) {
  require_feasible(s, a, cfg);
  StepOutcome out;
  if (a.transmits()) {
    const auto& src = s.sources[static_cast<std::size_t>(a.source)];
    const int attempt = a.kind == ActionKind::fresh ? 1 : src.attempts + 1;
    out.decoded = bernoulli(rng, decode_prob(attempt, cfg));
    out.cost = 1;
  }
  out.arrivals.resize(static_cast<std::size_t>(cfg.num_random_sources));
  for (int k = 0; k < cfg.num_random_sources; ++k)
    out.arrivals[static_cast<std::size_t>(k)] = bernoulli(rng, cfg.arrival_prob(k)) ? 1 : 0;
  out.next_state = advance_ages(s, a, out.decoded, out.arrivals, cfg);
  out.aoi_cost = avg_aoi(out.next_state);
  return out;
}

void SourceBranches::add(const SourceState& s, double p) {
  if (p <= 0.0) return;
  for (int i = 0; i < count; ++i) {
    if (items[static_cast<std::size_t>(i)].first == s) {
      items[static_cast<std::size_t>(i)].second += p;
      return;
    }
  }
  items[static_cast<std::size_t>(count++)] = {s, p};
}

SourceBranches source_branches(const SourceState& s, SourceRole role, double arrival_prob,
                               const SystemConfig& cfg) {
  const int cap = cfg.aoi_cap;
  SourceState base;
  base.proc_age = capped_inc(s.proc_age, cap);
  base.aoi = capped_inc(s.aoi, cap);
  base.attempts = s.attempts;

  double success = 0.0;
  int decoded_aoi = 0;
  if (role == SourceRole::fresh) {
    base.attempts = 1;
    base.proc_age = capped_inc(s.fresh_age, cap);
    success = decode_prob(1, cfg);
    decoded_aoi = capped_inc(s.fresh_age, cap);
  } else if (role == SourceRole::retransmit) {
    base.attempts = s.attempts + 1;
    success = decode_prob(s.attempts + 1, cfg);
    decoded_aoi = capped_inc(s.proc_age, cap);
  }

  const std::array<std::pair<int, double>, 2> fresh_outcomes{
      std::pair{0, arrival_prob}, std::pair{capped_inc(s.fresh_age, cap), 1.0 - arrival_prob}};

  SourceBranches out;
  for (const auto& [fresh_age, p_arrival] : fresh_outcomes) {
    SourceState next = base;
    next.fresh_age = fresh_age;
    if (role == SourceRole::untouched) {
      out.add(next, p_arrival);
      continue;
    }
    SourceState ok = next;
    ok.aoi = decoded_aoi;
    out.add(ok, success * p_arrival);
    out.add(next, (1.0 - success) * p_arrival);
  }
  return out;
}

std::vector<std::pair<SystemState, double>> transition_kernel(const SystemState& s, const Action& a,
                                                              const SystemConfig& cfg) {
  require_feasible(s, a, cfg);
  std::vector<std::pair<SystemState, double>> out{{s, 1.0}};
  for (int k = 0; k < s.num_sources(); ++k) {
    const auto branches =
        source_branches(s.sources[static_cast<std::size_t>(k)], role_of(a, k), cfg.arrival_prob(k), cfg);
    std::vector<std::pair<SystemState, double>> expanded;
    expanded.reserve(out.size() * static_cast<std::size_t>(branches.count));
    for (const auto& [partial, p] : out) {
      for (const auto& [src, q] : branches) {
        auto next = partial;
        next.sources[static_cast<std::size_t>(k)] = src;
        expanded.emplace_back(std::move(next), p * q);
      }
    }
    out = std::move(expanded);
  }
  return out;
}

double avg_aoi(const SystemState& s) {
  if (s.sources.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& src : s.sources) sum += src.aoi;
  return sum / static_cast<double>(s.sources.size());
}

}  // namespace harq_aoi
