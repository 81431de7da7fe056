#include "harq_aoi/lyapunov.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

namespace harq_aoi {

namespace {

// Per-source terms shared by the closed forms: with u, r the action's
// indicators for source k,
//   A = u f(1) df~ + r f(x+1) dp~,  P = u f(1) + r f(x+1),  d~ = min(d+1, cap).
struct SourceTerms {
  double u = 0.0, r = 0.0;
  double f_fresh = 0.0, f_retx = 0.0;
  double fresh = 0.0, proc = 0.0, aoi = 0.0;  // the capped increments

  double a() const { return u * f_fresh * fresh + r * f_retx * proc; }
  double p() const { return u * f_fresh + r * f_retx; }
};

std::vector<SourceTerms> source_terms(const SystemState& s, const Action& a, const SystemConfig& cfg) {
  const int cap = cfg.aoi_cap;
  std::vector<SourceTerms> out(s.sources.size());
  for (std::size_t k = 0; k < s.sources.size(); ++k) {
    const auto& src = s.sources[k];
    auto& t = out[k];
    t.fresh = std::min(src.fresh_age + 1, cap);
    t.proc = std::min(src.proc_age + 1, cap);
    t.aoi = std::min(src.aoi + 1, cap);
    if (a.targets(static_cast<int>(k))) {
      if (a.kind == ActionKind::fresh) {
        t.u = 1.0;
        t.f_fresh = decode_prob(1, cfg);
      } else {
        t.r = 1.0;
        t.f_retx = decode_prob(src.attempts + 1, cfg);
      }
    }
  }
  return out;
}

// The bracket of the second-moment formula (K^2 times the second moment).
double second_moment_bracket(const std::vector<SourceTerms>& t) {
  double sum = 0.0;
  for (const auto& k : t)
    sum += k.u * k.f_fresh * k.fresh * k.fresh + k.r * k.f_retx * k.proc * k.proc + (1.0 - k.p()) * k.aoi * k.aoi;
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j == k) continue;
      const auto& a = t[k];
      const auto& b = t[j];
      sum += a.a() * b.aoi + b.a() * a.aoi - a.p() * a.aoi * b.aoi - b.p() * b.aoi * a.aoi + b.aoi * a.aoi;
    }
  return sum;
}

double first_moment_sum(const std::vector<SourceTerms>& t) {
  double sum = 0.0;
  for (const auto& k : t) sum += k.a() + (1.0 - k.p()) * k.aoi;
  return sum;
}

}  // namespace

double virtual_queue_update(double queue, double next_avg_aoi, double aoi_limit) {
  return std::max(queue - aoi_limit + next_avg_aoi, 0.0);
}

double expected_next_aoi(const NetworkState& o, const Action& a, const SystemConfig& cfg) {
  const auto t = source_terms(o.system, a, cfg);
  return first_moment_sum(t) / static_cast<double>(t.size());
}

double expected_next_aoi_sq(const NetworkState& o, const Action& a, const SystemConfig& cfg) {
  const auto t = source_terms(o.system, a, cfg);
  const double k = static_cast<double>(t.size());
  return second_moment_bracket(t) / (k * k);
}

double dpp_objective(const NetworkState& o, const Action& a, const SystemConfig& cfg) {
  // Written out term by term, independently of the moment helpers above.
  const auto t = source_terms(o.system, a, cfg);
  const double K = static_cast<double>(t.size());
  const double Q = o.queue;
  const double D = cfg.aoi_limit;
  const double f1 = decode_prob(1, cfg);
  auto fr = [&](std::size_t k) { return t[k].r > 0.0 ? t[k].f_retx : 0.0; };

  double sends = 0.0;
  for (const auto& s : t) sends += s.u + s.r;

  double bracket = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto& s = t[k];
    bracket += s.u * f1 * s.fresh * s.fresh + s.r * fr(k) * s.proc * s.proc +
               (1.0 - s.u * f1 - s.r * fr(k)) * s.aoi * s.aoi;
  }
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j == k) continue;
      const auto& s = t[k];
      const auto& q = t[j];
      bracket += s.u * f1 * s.fresh * q.aoi + s.r * fr(k) * s.proc * q.aoi - s.u * f1 * s.aoi * q.aoi -
                 s.r * fr(k) * s.aoi * q.aoi + q.u * f1 * q.fresh * s.aoi + q.r * fr(j) * q.proc * s.aoi -
                 q.u * f1 * q.aoi * s.aoi - q.r * fr(j) * q.aoi * s.aoi + q.aoi * s.aoi;
    }
  double drift = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto& s = t[k];
    drift += s.u * f1 * s.fresh + s.r * fr(k) * s.proc + (1.0 - s.u * f1 - s.r * fr(k)) * s.aoi;
  }
  bracket += 2.0 * K * Q * drift;

  return cfg.dpp_weight * sends + bracket / (2.0 * K * K) + 0.5 * (D * D - 2.0 * Q * D);
}

ActionChoice select_action(const NetworkState& o, const SystemConfig& cfg) {
  ActionChoice best;
  best.objective = std::numeric_limits<double>::infinity();
  for (const auto& a : feasible_actions(o.system, cfg)) {
    const double w = dpp_objective(o, a, cfg);
    ++best.evaluations;
    if (w < best.objective) {
      best.objective = w;
      best.action = a;
    }
  }
  return best;
}

LcdtRun run_lcdt(const SystemConfig& cfg, std::uint64_t horizon, Rng& rng) {
  cfg.validate();
  LcdtRun run;
  run.slots.reserve(horizon);
  NetworkState o{SystemState::initial(cfg), 0.0};
  const int K = cfg.num_sources();
  double sends = 0.0, aoi_sum = 0.0, queue_sum = 0.0;
  for (std::uint64_t t = 0; t < horizon; ++t) {
    const Action a = select_action(o, cfg).action;
    auto out = step(o.system, a, rng, cfg);
    const double aoi = avg_aoi(o.system);
    sends += a.transmits() ? 1.0 : 0.0;
    aoi_sum += aoi;
    queue_sum += o.queue;
    const double n = static_cast<double>(t + 1);
    run.slots.push_back({t, action_code(a, K), out.decoded, aoi, sends / n, aoi_sum / n, o.queue});
    o.queue = virtual_queue_update(o.queue, out.aoi_cost, cfg.aoi_limit);
    o.system = std::move(out.next_state);
  }
  if (horizon > 0) {
    run.tau_bar = sends / static_cast<double>(horizon);
    run.delta_bar = aoi_sum / static_cast<double>(horizon);
    run.mean_queue = queue_sum / static_cast<double>(horizon);
  }
  return run;
}

void write_slot_csv(std::ostream& os, const std::vector<SlotRecord>& slots) {
  os << "slot,action_code,decoded,avg_aoi,running_tau_bar,running_delta_bar,Q\n";
  const auto old = os.precision(17);
  for (const auto& r : slots)
    os << r.slot << ',' << r.action_code << ',' << (r.decoded ? 1 : 0) << ',' << r.avg_aoi << ','
       << r.running_tau_bar << ',' << r.running_delta_bar << ',' << r.queue << '\n';
  os.precision(old);
}

}  // namespace harq_aoi
