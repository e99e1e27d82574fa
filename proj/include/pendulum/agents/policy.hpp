#pragma once

#include <optional>
#include <random>
#include <string>

#include "pendulum/agents/features.hpp"
#include "pendulum/agents/gru.hpp"
#include "pendulum/agents/nn.hpp"
#include "pendulum/env.hpp"

namespace pendulum::agents {

enum class Algo { Dqn, RDqn, Td3, RTd3 };

std::string algo_name(Algo algo);
/// "dqn", "rdqn", "td3", "rtd3". Throws std::invalid_argument.
Algo parse_algo(const std::string& name);
bool is_recurrent(Algo algo);
env::ActionMode action_mode(Algo algo);

inline constexpr int kDiscreteActions = 5;

/// Acting side of an agent: feature encoding, the optional episode encoder
/// and the network that picks actions (Q-network or deterministic policy).
class Policy {
public:
  Policy(Algo algo, FeatureSpec features, std::optional<GruEncoder<float>> encoder,
         Mlp<float> net);

  /// Start of an episode: hidden state back to zero.
  void reset();
  /// Advances the encoder by one observation and returns the agent state
  /// ([h || features] for recurrent agents, features otherwise).
  VectorXf observe(const env::ObservationVector& obs);
  /// Epsilon-greedy (DQN) or Gaussian-perturbed (TD3) action; explore = 0 is
  /// greedy.
  env::Action choose(const VectorXf& state, double explore, std::mt19937_64& rng) const;
  /// Greedy action for a fresh observation.
  env::Action act(const env::ObservationVector& obs);

  Algo algo() const { return algo_; }
  const FeatureSpec& features() const { return features_; }
  int state_dim() const;
  const std::optional<GruEncoder<float>>& encoder() const { return encoder_; }
  std::optional<GruEncoder<float>>& encoder() { return encoder_; }
  const Mlp<float>& net() const { return net_; }

  void save(const std::string& path) const;
  /// Throws std::runtime_error on a missing or malformed file.
  static Policy load(const std::string& path);

private:
  Algo algo_;
  FeatureSpec features_;
  std::optional<GruEncoder<float>> encoder_;
  Mlp<float> net_;
};

}  // namespace pendulum::agents
