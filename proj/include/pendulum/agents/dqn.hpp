#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pendulum/agents/nn.hpp"

namespace pendulum::agents {

struct DqnConfig {
  double gamma = 0.99;
  double lr = 3e-4;
  std::vector<int> hidden{256, 256};
  double huber_delta = 1.0;
  int target_sync_period = 1000;  // hard sync every N updates; 0 = soft updates with tau
  double tau = 0.005;
  double eps_start = 1.0;
  double eps_end = 0.05;
  long eps_decay_steps = 50000;
  double grad_clip = 10.0;  // global norm; <= 0 disables

  void validate() const;
};

/// Linear decay from eps_start to eps_end over eps_decay_steps env steps.
double epsilon_at(long step, const DqnConfig& cfg);

/// Samples are columns.
struct DiscreteBatch {
  MatrixXf s;
  std::vector<int> a;
  VectorXf r;
  MatrixXf s2;
  VectorXf done;  // 1 for terminal transitions
};

class Dqn {
public:
  Dqn(int state_dim, int n_actions, const DqnConfig& cfg, std::uint64_t seed);

  VectorXf q_values(const VectorXf& s) const;
  int greedy(const VectorXf& s) const;
  int act(const VectorXf& s, double epsilon, std::mt19937_64& rng) const;

  /// y = r + gamma (1 - done) max_a Q_target(s2, a)
  VectorXf targets(const DiscreteBatch& b) const;

  /// One Adam step on the Huber TD loss; returns the batch loss. When
  /// `dstate` is given it receives dLoss/ds (state_dim x batch).
  float update(const DiscreteBatch& b, MatrixXf* dstate = nullptr);

  void sync_target() { target_ = online_; }

  const Mlp<float>& online() const { return online_; }
  Mlp<float>& online() { return online_; }
  const Mlp<float>& target() const { return target_; }
  const DqnConfig& config() const { return cfg_; }
  long updates() const { return updates_; }
  int n_actions() const { return n_actions_; }

private:
  DqnConfig cfg_;
  int n_actions_;
  Mlp<float> online_;
  Mlp<float> target_;
  Adam<float> adam_;
  long updates_ = 0;
};

}  // namespace pendulum::agents
