#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "pendulum/agents/nn.hpp"

namespace pendulum::agents {

struct Td3Config {
  double gamma = 0.99;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  std::vector<int> hidden{256, 256};
  double tau = 0.005;
  int policy_delay = 2;
  double target_noise = 0.2;
  double noise_clip = 0.5;
  double explore_noise = 0.1;

  void validate() const;
};

struct ContinuousBatch {
  MatrixXf s;
  MatrixXf a;  // action_dim x batch, in [-1, 1]
  VectorXf r;
  MatrixXf s2;
  VectorXf done;
};

struct Td3Losses {
  float critic = 0.0f;
  std::optional<float> actor;  // only on delayed policy updates
};

class Td3 {
public:
  Td3(int state_dim, int action_dim, const Td3Config& cfg, std::uint64_t seed);

  /// Deterministic policy output in [-1, 1].
  VectorXf act(const VectorXf& s) const;
  /// Policy output plus N(0, explore_noise), clipped to [-1, 1].
  VectorXf explore(const VectorXf& s, std::mt19937_64& rng) const;

  Td3Losses update(const ContinuousBatch& b, MatrixXf* dstate = nullptr);

  /// Clipped target-policy smoothing noise used by the last update.
  const MatrixXf& last_target_noise() const { return last_noise_; }

  const Mlp<float>& actor() const { return actor_; }
  Mlp<float>& actor() { return actor_; }
  const Mlp<float>& critic1() const { return q1_; }
  const Mlp<float>& critic2() const { return q2_; }
  const Td3Config& config() const { return cfg_; }
  long updates() const { return updates_; }
  int action_dim() const { return action_dim_; }

private:
  static MatrixXf join(const MatrixXf& s, const MatrixXf& a);

  Td3Config cfg_;
  int state_dim_;
  int action_dim_;
  Mlp<float> actor_, actor_t_;
  Mlp<float> q1_, q2_, q1_t_, q2_t_;
  Adam<float> actor_opt_, q1_opt_, q2_opt_;
  std::mt19937_64 rng_;
  MatrixXf last_noise_;
  long updates_ = 0;
};

}  // namespace pendulum::agents
