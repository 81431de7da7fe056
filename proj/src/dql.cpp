#include "harq_aoi/dql.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <unordered_set>

#include "harq_aoi/errors.hpp"

namespace harq_aoi {

Eigen::VectorXd featurize(const NetworkState& o, const SystemConfig& cfg, const TrainConfig& train) {
  const auto K = o.system.sources.size();
  Eigen::VectorXd x(static_cast<Eigen::Index>(4 * K + 1));
  const double cap = cfg.aoi_cap;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& s = o.system.sources[k];
    const auto i = static_cast<Eigen::Index>(4 * k);
    x[i] = s.fresh_age / cap;
    x[i + 1] = s.proc_age / cap;
    x[i + 2] = s.aoi / cap;
    x[i + 3] = static_cast<double>(s.attempts) / cfg.max_attempts;
  }
  x[static_cast<Eigen::Index>(4 * K)] = o.queue / (train.queue_feature_scale * cap);
  return x;
}

std::vector<std::uint8_t> feasible_mask(const SystemState& s, const SystemConfig& cfg) {
  const int K = s.num_sources();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(num_action_codes(K)), 0);
  for (const auto& a : feasible_actions(s, cfg)) mask[static_cast<std::size_t>(action_code(a, K))] = 1;
  return mask;
}

double dpp_reward(bool transmits, double queue_before, double queue_after, double dpp_weight) {
  return -((transmits ? dpp_weight : 0.0) + 0.5 * queue_after * queue_after - 0.5 * queue_before * queue_before);
}

QNetwork::QNetwork(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng) {
  std::vector<int> dims{inputs};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(outputs);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd::Zero(dims[l + 1])};
    const double bound = std::sqrt(6.0 / dims[l]);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    layers_.push_back(std::move(layer));
  }
}

QNetwork::QNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows())
      throw std::invalid_argument("bias size mismatch in layer " + std::to_string(l));
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())
      throw std::invalid_argument("layer " + std::to_string(l) + " input size mismatch");
  }
}

std::vector<int> QNetwork::dims() const {
  std::vector<int> d{inputs()};
  for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
  return d;
}

std::size_t QNetwork::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weight * a + layers_[l].bias;
    a = l + 1 < layers_.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Eigen::MatrixXd QNetwork::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

double QNetwork::td_loss(const Eigen::MatrixXd& x, const std::vector<int>& actions,
                         const Eigen::VectorXd& targets) const {
  const Eigen::MatrixXd q = forward(x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const double e = q(actions[static_cast<std::size_t>(i)], i) - targets[i];
    loss += e * e;
  }
  return loss / (2.0 * static_cast<double>(q.cols()));
}

double QNetwork::td_loss_grad(const Eigen::MatrixXd& x, const std::vector<int>& actions,
                              const Eigen::VectorXd& targets, std::vector<Layer>& grad) const {
  const auto L = layers_.size();
  const double B = static_cast<double>(x.cols());
  std::vector<Eigen::MatrixXd> acts{x};  // inputs to each layer
  Eigen::MatrixXd out;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = layers_[l].weight * acts.back();
    z.colwise() += layers_[l].bias;
    if (l + 1 < L)
      acts.push_back(z.cwiseMax(0.0));
    else
      out = std::move(z);
  }

  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    const double e = out(a, i) - targets[i];
    loss += e * e;
    delta(a, i) = e / B;
  }

  grad.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    grad[l].weight = delta * acts[l].transpose();
    grad[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers_[l].weight.transpose() * delta;
      delta = (acts[l].array() > 0.0).select(back, 0.0);
    }
  }
  return loss / (2.0 * B);
}

Eigen::VectorXd QNetwork::flat_params() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index i = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) p[i++] = l.weight(r, c);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) p[i++] = l.bias[r];
  }
  return p;
}

void QNetwork::set_flat_params(const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != num_params()) throw std::invalid_argument("parameter count mismatch");
  Eigen::Index i = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[i++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = p[i++];
  }
}

bool QNetwork::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Adam::Adam(const QNetwork& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& l : net.layers()) {
    m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    v_.push_back(m_.back());
  }
}

void Adam::step(QNetwork& net, const std::vector<QNetwork::Layer>& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, m_[l].weight, v_[l].weight, grad[l].weight);
    update(layers[l].bias, m_[l].bias, v_[l].bias, grad[l].bias);
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (n > items_.size()) throw std::invalid_argument("batch larger than replay fill level");
  // Floyd's algorithm: n distinct indices, each subset equally likely.
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  const std::size_t N = items_.size();
  for (std::size_t j = N - n; j < N; ++j) {
    std::size_t r = uniform_index(rng, j + 1);
    if (!seen.insert(r).second) {
      seen.insert(j);
      r = j;
    }
    out.push_back(r);
  }
  return out;
}

int greedy_action(const Eigen::VectorXd& q_values, const std::vector<std::uint8_t>& mask) {
  int best = -1;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a] && (best < 0 || q_values[static_cast<Eigen::Index>(a)] > q_values[best])) best = static_cast<int>(a);
  if (best < 0) throw std::invalid_argument("empty action mask");
  return best;
}

int act(const QNetwork& net, const Eigen::VectorXd& features, const std::vector<std::uint8_t>& mask, double epsilon,
        Rng& rng) {
  if (uniform01(rng) < epsilon) {
    std::vector<int> allowed;
    for (std::size_t a = 0; a < mask.size(); ++a)
      if (mask[a]) allowed.push_back(static_cast<int>(a));
    if (allowed.empty()) throw std::invalid_argument("empty action mask");
    return allowed[uniform_index(rng, allowed.size())];
  }
  return greedy_action(net.forward(features), mask);
}

double epsilon_at(const TrainConfig& train, std::uint64_t step, std::uint64_t total_steps) {
  const double span = train.epsilon_decay_fraction * static_cast<double>(total_steps);
  const double frac = span > 0.0 ? std::min(1.0, static_cast<double>(step) / span) : 1.0;
  return train.epsilon_start + (train.epsilon_end - train.epsilon_start) * frac;
}

TrainResult train_dql(const SystemConfig& cfg, const TrainConfig& train, Rng& rng,
                      const std::function<void(const EpisodeStats&)>& on_episode) {
  cfg.validate();
  train.validate();
  const int K = cfg.num_sources();
  TrainResult out;
  out.network = QNetwork(feature_count(K), train.hidden_layers, num_action_codes(K), rng);
  QNetwork& net = out.network;
  QNetwork target = net;
  Adam adam(net, train.learning_rate);
  ReplayBuffer replay(train.replay_capacity);

  const auto total_steps =
      static_cast<std::uint64_t>(train.episodes) * static_cast<std::uint64_t>(train.steps_per_episode);
  const auto B = static_cast<std::size_t>(train.batch_size);
  std::uint64_t steps = 0;
  std::vector<QNetwork::Layer> grad;
  Eigen::MatrixXd x(feature_count(K), train.batch_size), xn(feature_count(K), train.batch_size);
  Eigen::VectorXd y(train.batch_size);
  std::vector<int> actions(B);

  for (int ep = 0; ep < train.episodes; ++ep) {
    NetworkState o{SystemState::initial(cfg), 0.0};
    Eigen::VectorXd feat = featurize(o, cfg, train);
    auto mask = feasible_mask(o.system, cfg);
    double reward_sum = 0.0, sends = 0.0, aoi_sum = 0.0, eps = 0.0;

    for (int t = 0; t < train.steps_per_episode; ++t, ++steps) {
      eps = epsilon_at(train, steps, total_steps);
      const int code = act(net, feat, mask, eps, rng);
      const Action a = action_from_code(code, K);
      auto next = step(o.system, a, rng, cfg);
      const double q_next = virtual_queue_update(o.queue, next.aoi_cost, cfg.aoi_limit);
      const double q_before = o.queue;
      const double r = dpp_reward(a.transmits(), q_before, q_next, cfg.dpp_weight);
      reward_sum += r;
      sends += a.transmits() ? 1.0 : 0.0;
      aoi_sum += avg_aoi(o.system);

      o.system = std::move(next.next_state);
      o.queue = q_next;
      Eigen::VectorXd next_feat = featurize(o, cfg, train);
      auto next_mask = feasible_mask(o.system, cfg);
      replay.push({feat, code, r * train.reward_scale, next_feat, next_mask});
      feat = std::move(next_feat);
      mask = std::move(next_mask);

      if (steps + 1 < static_cast<std::uint64_t>(train.learning_starts) || replay.size() < B) continue;
      const auto idx = replay.sample_indices(B, rng);
      for (std::size_t i = 0; i < B; ++i) {
        const auto& tr = replay.at(idx[i]);
        x.col(static_cast<Eigen::Index>(i)) = tr.features;
        xn.col(static_cast<Eigen::Index>(i)) = tr.next_features;
        actions[i] = tr.action;
      }
      const Eigen::MatrixXd qn = target.forward(xn);
      for (std::size_t i = 0; i < B; ++i) {
        const auto& tr = replay.at(idx[i]);
        const auto col = static_cast<Eigen::Index>(i);
        y[col] = tr.reward + train.discount * qn(greedy_action(qn.col(col), tr.next_mask), col);
      }
      const double loss = net.td_loss_grad(x, actions, y, grad);
      if (!std::isfinite(loss))
        throw ConvergenceError("DQL loss became non-finite at episode " + std::to_string(ep) + ", step " +
                               std::to_string(steps));
      adam.step(net, grad);
      ++out.gradient_steps;
      if (train.target_soft_rate > 0.0) {
        auto& tl = target.layers();
        for (std::size_t l = 0; l < tl.size(); ++l) {
          tl[l].weight += train.target_soft_rate * (net.layers()[l].weight - tl[l].weight);
          tl[l].bias += train.target_soft_rate * (net.layers()[l].bias - tl[l].bias);
        }
      } else if (out.gradient_steps % static_cast<std::uint64_t>(train.target_sync_steps) == 0) {
        target = net;
        ++out.target_syncs;
      }
    }
    if (!net.all_finite())
      throw ConvergenceError("DQL weights became non-finite after episode " + std::to_string(ep));

    const double n = train.steps_per_episode;
    EpisodeStats st{ep, reward_sum / n, sends / n, aoi_sum / n, eps};
    out.curve.push_back(st);
    if (on_episode) on_episode(st);
  }
  return out;
}

void write_learning_curve_csv(std::ostream& os, const std::vector<EpisodeStats>& curve) {
  os << "episode,mean_return,tau_bar,delta_bar,epsilon\n";
  const auto old = os.precision(17);
  for (const auto& e : curve)
    os << e.episode << ',' << e.mean_return << ',' << e.tau_bar << ',' << e.delta_bar << ',' << e.epsilon << '\n';
  os.precision(old);
}

namespace {

constexpr char kMagic[4] = {'H', 'Q', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const QNetwork& net, std::ostream& os) {
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers().size()));
  for (int d : net.dims()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_le<double>(os, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_le<double>(os, l.bias[r]);
  }
  if (!os) throw Error("failed to write checkpoint");
}

void save_checkpoint(const QNetwork& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save_checkpoint(net, os);
}

QNetwork load_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error("not a network checkpoint");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is);
  if (count == 0 || count > 64) throw Error("bad layer count in checkpoint");
  std::vector<std::uint32_t> dims(count + 1);
  for (auto& d : dims) {
    d = get_le<std::uint32_t>(is);
    if (d == 0 || d > (1u << 20)) throw Error("bad layer size in checkpoint");
  }
  std::vector<QNetwork::Layer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    QNetwork::Layer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get_le<double>(is);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = get_le<double>(is);
    layers.push_back(std::move(layer));
  }
  return QNetwork(std::move(layers));
}

QNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return load_checkpoint(is);
}

}  // namespace harq_aoi
