#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pendulum/agents/dqn.hpp"
#include "pendulum/agents/policy.hpp"
#include "pendulum/agents/replay.hpp"
#include "pendulum/agents/td3.hpp"
#include "pendulum/env.hpp"

namespace pendulum::agents {

/// Observation window for re-encoding a transition with a trainable GRU:
/// hidden state before the window, then the features of each step up to and
/// including the next state.
struct SequenceWindow {
  VectorXf h0;
  MatrixXf xs;  // feature_dim x (k + 1)
};

struct Transition {
  VectorXf s;
  int action = 0;       // discrete
  VectorXf action_vec;  // continuous
  float reward = 0.0f;
  VectorXf s2;
  bool terminal = false;
  std::shared_ptr<const SequenceWindow> window;
};

struct TrainConfig {
  Algo algo = Algo::Dqn;
  DqnConfig dqn;
  Td3Config td3;
  int batch = 128;
  std::size_t buffer_capacity = 100000;
  int warmup = 1000;
  int episodes = 2000;
  std::uint64_t seed = 0;
  FeatureScaling scaling = FeatureScaling::Normalized;
  int gru_hidden = 32;
  bool train_gru = false;
  int gru_window = 8;
  double gru_lr = 1e-4;
  int updates_per_step = 1;
  bool async = false;
  int snapshot_period = 500;  // env steps between actor parameter refreshes
  // Stop once the best trailing-window mean reward has not improved for
  // `plateau_patience` episodes (0 disables).
  int plateau_window = 50;
  int plateau_patience = 0;

  void validate() const;
};

struct EpisodeRecord {
  int episode = 0;
  double ret = 0.0;
  int steps = 0;
  double wall_ms = 0.0;
  double mean_reward = 0.0;
  double upright_fraction = 0.0;  // |theta_up| < 0.2 rad over the episode
};

struct LearningCurve {
  std::vector<EpisodeRecord> episodes;
  std::string status = "ok";  // ok | stopped | plateau | connection_lost | diverged
  std::string error;
  long env_steps = 0;
  long updates = 0;
  double wall_s = 0.0;

  /// Mean per-step reward over the last `n` episodes.
  double trailing_mean_reward(std::size_t n) const;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Learner, replay buffer and actor loop for one agent.
class Trainer {
public:
  Trainer(const TrainConfig& cfg, const env::FeatureFlags& flags);
  ~Trainer();

  /// Trains against `env`. Stops early when `stop` becomes true.
  LearningCurve run(env::Environment& env, const EpisodeCallback& on_episode = {},
                    const std::atomic<bool>* stop = nullptr);

  /// Current learner parameters as a greedy policy.
  Policy policy() const;

  const ReplayBuffer<Transition>& buffer() const;
  const TrainConfig& config() const { return cfg_; }
  long updates() const;

private:
  struct Learner;

  TrainConfig cfg_;
  FeatureSpec features_;
  std::unique_ptr<Learner> learner_;
};

struct RolloutStats {
  double ret = 0.0;
  int steps = 0;
  int time_to_upright = -1;        // first step with |theta_up| < threshold, or -1
  double time_to_upright_s = -1.0; // environment time until that step
  double upright_fraction = 0.0;   // over steps [settle_from, steps)
  double mean_reward = 0.0;
};

using ActFn = std::function<env::Action(const env::ObservationVector&)>;

/// One episode choosing actions with `act`. theta_up comes from the observed
/// encoder.
RolloutStats rollout(env::Environment& env, const ActFn& act, double upright_threshold = 0.2,
                     int settle_from = 100);

/// Greedy episode with `policy`.
RolloutStats rollout(env::Environment& env, Policy& policy, double upright_threshold = 0.2,
                     int settle_from = 100);

/// episode,return,steps,wall_ms
void write_curve_csv(const std::string& path, const LearningCurve& curve);

}  // namespace pendulum::agents
