#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "harq_aoi/config.hpp"
#include "harq_aoi/env.hpp"
#include "harq_aoi/lyapunov.hpp"
#include "harq_aoi/rng.hpp"

namespace harq_aoi {

/// (fresh_age, proc_age, aoi, attempts) of every source followed by Q.
/// Ages are divided by aoi_cap, attempts by max_attempts and Q by
/// queue_feature_scale * aoi_cap. Length 4K + 1.
Eigen::VectorXd featurize(const NetworkState& o, const SystemConfig& cfg, const TrainConfig& train);
inline int feature_count(int num_sources) { return 4 * num_sources + 1; }

/// One flag per action code.
std::vector<std::uint8_t> feasible_mask(const SystemState& s, const SystemConfig& cfg);

/// -(V * 1[transmit] + Q_after^2 / 2 - Q_before^2 / 2).
double dpp_reward(bool transmits, double queue_before, double queue_after, double dpp_weight);

/// Fully connected network, ReLU on hidden layers and identity output.
class QNetwork {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  QNetwork() = default;
  /// He-uniform weights, zero biases.
  QNetwork(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng);
  explicit QNetwork(std::vector<Layer> layers);

  int inputs() const { return static_cast<int>(layers_.front().weight.cols()); }
  int outputs() const { return static_cast<int>(layers_.back().weight.rows()); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::vector<int> dims() const;
  std::size_t num_params() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Column-wise batch forward.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Loss (1 / 2B) * sum_i (Q(x_i, a_i) - y_i)^2 over the batch columns.
  double td_loss(const Eigen::MatrixXd& x, const std::vector<int>& actions, const Eigen::VectorXd& targets) const;
  /// Same loss plus its gradient, laid out like layers().
  double td_loss_grad(const Eigen::MatrixXd& x, const std::vector<int>& actions, const Eigen::VectorXd& targets,
                      std::vector<Layer>& grad) const;

  /// All weights then biases layer by layer (weights in row-major order).
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& p);
  bool all_finite() const;

 private:
  std::vector<Layer> layers_;
};

class Adam {
 public:
  Adam(const QNetwork& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(QNetwork& net, const std::vector<QNetwork::Layer>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<QNetwork::Layer> m_, v_;
};

struct Transition {
  Eigen::VectorXd features;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_features;
  std::vector<std::uint8_t> next_mask;
};

/// Fixed-capacity FIFO; once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Entry i in insertion order, 0 being the oldest still stored.
  const Transition& at(std::size_t i) const;
  /// Indices (into at()) of `n` distinct entries chosen uniformly.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

/// argmax of the Q-values over the masked actions; first maximizer wins.
int greedy_action(const Eigen::VectorXd& q_values, const std::vector<std::uint8_t>& mask);

/// Epsilon-greedy. Draws one uniform for the explore decision and, when
/// exploring, one more for the action.
int act(const QNetwork& net, const Eigen::VectorXd& features, const std::vector<std::uint8_t>& mask, double epsilon,
        Rng& rng);

double epsilon_at(const TrainConfig& train, std::uint64_t step, std::uint64_t total_steps);

struct EpisodeStats {
  int episode = 0;
  double mean_return = 0.0;  // mean per-slot reward (unscaled)
  double tau_bar = 0.0;
  double delta_bar = 0.0;
  double epsilon = 0.0;
};

struct TrainResult {
  QNetwork network;
  std::vector<EpisodeStats> curve;
  std::uint64_t gradient_steps = 0;
  std::uint64_t target_syncs = 0;
};

/// Deep Q-learning on the drift-plus-penalty reward. The environment and
/// Q are reset at every episode start. Throws ConvergenceError on a
/// non-finite loss or weight.
TrainResult train_dql(const SystemConfig& cfg, const TrainConfig& train, Rng& rng,
                      const std::function<void(const EpisodeStats&)>& on_episode = {});

/// episode,mean_return,tau_bar,delta_bar,epsilon
void write_learning_curve_csv(std::ostream& os, const std::vector<EpisodeStats>& curve);

/// Binary layout: "HQNT", u32 version, u32 layer count, u32 dims
/// (layer count + 1), then per layer the weights (row-major) and biases as
/// little-endian IEEE-754 doubles.
void save_checkpoint(const QNetwork& net, std::ostream& os);
void save_checkpoint(const QNetwork& net, const std::filesystem::path& path);
QNetwork load_checkpoint(std::istream& is);
QNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace harq_aoi
