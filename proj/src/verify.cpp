#include "harq_aoi/verify.hpp"

#include <cmath>
#include <sstream>

#include "harq_aoi/dql.hpp"
#include "harq_aoi/lyapunov.hpp"

namespace harq_aoi {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, hi - lo + 1)); }

double rel_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

template <class F>
CheckResult over_pairs(const std::string& name, std::size_t pairs, std::uint64_t seed, double tol, F&& error_of) {
  Rng rng(seed);
  CheckResult r;
  r.name = name;
  SystemConfig cfg;
  for (std::size_t i = 0; i < pairs; ++i) {
    if (i % 50 == 0) cfg = random_config(rng);
    const auto s = random_state(cfg, rng);
    const auto actions = feasible_actions(s, cfg);
    const auto a = actions[uniform_index(rng, actions.size())];
    const double q = uniform01(rng) < 0.2 ? 0.0 : 50.0 * uniform01(rng);
    const double e = error_of(cfg, s, a, q);
    if (e > r.worst) {
      r.worst = e;
      std::ostringstream d;
      d << "worst at " << to_string(s) << " action " << to_string(a) << " Q " << q;
      r.detail = d.str();
    }
    ++r.samples;
  }
  r.passed = r.worst <= tol;
  return r;
}

}  // namespace

SystemConfig random_config(Rng& rng, int max_sources) {
  SystemConfig cfg;
  const int K = uniform_int(rng, 1, max_sources);
  cfg.num_random_sources = uniform_int(rng, 0, K);
  cfg.num_gaw_sources = K - cfg.num_random_sources;
  cfg.arrival_probs.clear();
  for (int k = 0; k < std::max(1, cfg.num_random_sources); ++k) cfg.arrival_probs.push_back(0.05 + 0.95 * uniform01(rng));
  cfg.first_error_prob = uniform01(rng);
  cfg.harq_gain = uniform01(rng);
  cfg.max_attempts = uniform_int(rng, 1, 5);
  cfg.aoi_cap = uniform_int(rng, 1, 20);
  cfg.aoi_limit = 1.0 + (cfg.aoi_cap - 1.0) * uniform01(rng);
  cfg.dpp_weight = 0.1 + 100.0 * uniform01(rng);
  return cfg;
}

SystemState random_state(const SystemConfig& cfg, Rng& rng) {
  SystemState s = SystemState::initial(cfg);
  for (int k = 0; k < cfg.num_sources(); ++k) {
    auto& src = s.sources[static_cast<std::size_t>(k)];
    src.aoi = uniform_int(rng, 0, cfg.aoi_cap);
    src.proc_age = uniform_int(rng, 0, src.aoi);
    src.fresh_age = cfg.is_random(k) ? uniform_int(rng, 0, src.proc_age) : 0;
    src.attempts = uniform_int(rng, 0, cfg.max_attempts);
  }
  return s;
}

CheckResult check_aoi_moments(std::size_t pairs, std::uint64_t seed, double tol) {
  return over_pairs("aoi_moments", pairs, seed, tol, [](const SystemConfig& cfg, const SystemState& s, const Action& a, double q) {
    double m1 = 0.0, m2 = 0.0;
    for (const auto& [next, p] : transition_kernel(s, a, cfg)) {
      const double d = avg_aoi(next);
      m1 += p * d;
      m2 += p * d * d;
    }
    const NetworkState o{s, q};
    return std::max(rel_error(expected_next_aoi(o, a, cfg), m1), rel_error(expected_next_aoi_sq(o, a, cfg), m2));
  });
}

CheckResult check_dpp_objective(std::size_t pairs, std::uint64_t seed, double tol) {
  return over_pairs("dpp_objective", pairs, seed, tol, [](const SystemConfig& cfg, const SystemState& s, const Action& a, double q) {
    const NetworkState o{s, q};
    const double D = cfg.aoi_limit;
    const double bound = cfg.dpp_weight * (a.transmits() ? 1.0 : 0.0) +
                         0.5 * (D * D + expected_next_aoi_sq(o, a, cfg) + 2.0 * q * (expected_next_aoi(o, a, cfg) - D));
    return rel_error(dpp_objective(o, a, cfg), bound);
  });
}

CheckResult check_kernel_normalization(std::size_t pairs, std::uint64_t seed, double tol) {
  return over_pairs("kernel_normalization", pairs, seed, tol, [](const SystemConfig& cfg, const SystemState& s, const Action& a, double) {
    double total = 0.0;
    for (const auto& [next, p] : transition_kernel(s, a, cfg)) total += p;
    return std::abs(total - 1.0);
  });
}

CheckResult check_td_gradient(std::uint64_t seed, double tol) {
  Rng rng(seed);
  CheckResult r;
  r.name = "td_gradient";
  QNetwork net(5, {8}, 3, rng);
  for (auto& l : net.layers())
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = uniform01(rng) - 0.5;
  const int batch = 6;
  Eigen::MatrixXd x(5, batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * uniform01(rng) - 1.0;
  std::vector<int> actions;
  Eigen::VectorXd y(batch);
  for (int i = 0; i < batch; ++i) {
    actions.push_back(static_cast<int>(uniform_index(rng, 3)));
    y[i] = 2.0 * uniform01(rng) - 1.0;
  }
  std::vector<QNetwork::Layer> grad;
  net.td_loss_grad(x, actions, y, grad);
  QNetwork g(grad);
  const Eigen::VectorXd analytic = g.flat_params();
  const Eigen::VectorXd p = net.flat_params();
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Eigen::VectorXd q = p;
    q[i] = p[i] + h;
    net.set_flat_params(q);
    const double up = net.td_loss(x, actions, y);
    q[i] = p[i] - h;
    net.set_flat_params(q);
    const double down = net.td_loss(x, actions, y);
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(fd) + std::abs(analytic[i]), 1e-6);
    r.worst = std::max(r.worst, std::abs(fd - analytic[i]) / scale);
    ++r.samples;
  }
  net.set_flat_params(p);
  r.passed = r.worst <= tol;
  return r;
}

std::vector<CheckResult> run_verification(std::uint64_t seed) {
  return {check_aoi_moments(10000, seed), check_dpp_objective(10000, seed + 1),
          check_kernel_normalization(10000, seed + 2), check_td_gradient(seed + 3)};
}

}  // namespace harq_aoi
