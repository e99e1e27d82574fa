#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pendulum/clock.hpp"
#include "pendulum/firmware.hpp"
#include "pendulum/physics.hpp"
#include "pendulum/transport/channel.hpp"

namespace pendulum::env {

using firmware::Action;
using firmware::ActionMode;
using firmware::ContinuousAction;
using firmware::DiscreteAction;

class ConnectionLost : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Principal angle in [-pi, pi].
double wrap_angle(double angle);

/// Angle from upright for a pendulum angle measured from the bottom.
double theta_up_from_bottom(double theta);

/// R = -theta_up^2 - 0.5 omega^2, with omega in rev/s.
double reward(double theta_up, double omega_rps);

/// First-order smoothing of continuous actions:
/// a_bar <- a_bar * c + u * (1 - c).
struct ActionFilter {
  double a_bar = 0.0;
  double c = 0.85;

  double apply(double u);
  void reset() { a_bar = 0.0; }
};

/// Which calculated values are exposed to the agent. Encoder count and
/// servo position are always present.
struct FeatureFlags {
  bool pend_velocity = true;
  bool pend_acceleration = true;
  bool arm_velocity = true;
  bool time_since_last_action = true;
  bool observation_age = true;

  std::size_t count() const;
};

struct ObservationVector {
  int encoder_count = 0;
  double servo_position = 0.0;
  double pend_velocity = 0.0;       // rev/s
  double pend_acceleration = 0.0;   // rev/s^2
  double arm_velocity = 0.0;        // rev/s
  double time_since_last_action = 0.0;  // s
  double observation_age = 0.0;         // s, receive -> use

  /// Pendulum angle from the bottom implied by the encoder count.
  double theta() const;
  /// Raw exposed values in declaration order, filtered by `flags`.
  std::vector<double> values(const FeatureFlags& flags) const;
};

/// Builds an observation from a firmware message. Returns nullopt for a
/// malformed payload.
std::optional<ObservationVector> parse_observation(const std::string& payload,
                                                   double receive_time, double use_time,
                                                   double last_action_time);

struct StepInfo {
  std::int64_t message_time_ms = 0;  // firmware reference time of the observation
  double sim_time = 0.0;             // environment clock at use
  double step_duration = 0.0;
  double end_to_end_age = 0.0;       // use time - firmware stamp (shared clock only)
  int extra_frames = 0;
  bool safety_triggered = false;
  std::uint64_t skipped_messages = 0;
};

struct StepResult {
  ObservationVector observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

enum class ResetMode { Hold, Randomized };

struct EnvSettings {
  int step_time_ms = 56;
  int episode_steps = 500;
  FeatureFlags features;
  double filter_c = 0.85;
  ActionMode mode = ActionMode::Discrete;
  DelayModel delay = DelayModel::none();
  int device_id = 0;
  int stale_limit_ms = 500;
  int reset_wait_ms = 2000;
  int reset_timeout_ms = 5000;
  ResetMode reset_mode = ResetMode::Hold;
  std::uint64_t seed = 0;

  void validate() const;
  /// Reset hold rounded up to whole steps of `step_ms`.
  int reset_steps(int step_ms) const;
};

/// Gym-style environment contract shared by the simulated and wired variants.
class Environment {
public:
  virtual ~Environment() = default;
  virtual ObservationVector reset() = 0;
  virtual StepResult step(const Action& action) = 0;
  virtual ActionMode mode() const = 0;
  virtual const EnvSettings& settings() const = 0;
  virtual int steps() const = 0;
  virtual std::string name() const = 0;
};

/// Direct simulator. Each step executes one firmware act tick at the start
/// of the step, then advances the physics by the delay model's frames.
/// Observations carry ground-truth velocities; the safety rule sees the same
/// smoothed encoder estimate the firmware would compute at its poll cadence.
class PendulumSim final : public Environment {
public:
  PendulumSim(EnvSettings settings, PhysicsParams params = {},
              firmware::FirmwareConfig actuator = {}, PendulumState initial = {});

  ObservationVector reset() override;
  StepResult step(const Action& action) override;
  ActionMode mode() const override { return settings_.mode; }
  const EnvSettings& settings() const override { return settings_; }
  int steps() const override { return steps_; }
  std::string name() const override;

  const PendulumState& state() const { return state_; }
  double servo_command() const { return servo_command_; }
  const ActionFilter& filter() const { return filter_; }

private:
  ObservationVector observe(const PendulumState& s, double prev_theta_dot, double dt,
                            double since_action, double age) const;
  void advance(int frames, double target);
  void poll_due();

  EnvSettings settings_;
  PhysicsParams params_;
  firmware::FirmwareConfig actuator_;
  PendulumState state_;
  double servo_command_ = 0.0;
  ActionFilter filter_;
  std::mt19937_64 rng_;
  int steps_ = 0;
  bool active_ = false;
  // Firmware-equivalent speed estimate for the safety rule.
  firmware::VelocityEstimator speed_;
  std::optional<firmware::EncoderCount> last_count_;
  std::int64_t last_poll_ms_ = 0;
  std::int64_t next_poll_ms_ = 0;
  std::int64_t origin_frame_ = 0;
};

/// Over-the-wire environment: publishes actions without waiting, sleeps for
/// the step time on `clock`, then reads the latest streamed observation.
class PendulumWire final : public Environment {
public:
  PendulumWire(EnvSettings settings, transport::Session& session, Clock& clock);

  ObservationVector reset() override;
  StepResult step(const Action& action) override;
  ActionMode mode() const override { return settings_.mode; }
  const EnvSettings& settings() const override { return settings_; }
  int steps() const override { return steps_; }
  std::string name() const override { return "wire"; }

  std::uint64_t skipped_messages() const { return skipped_; }
  std::uint64_t received_messages() const { return received_; }
  /// Last action payload written to the bus.
  const std::string& last_action_payload() const { return last_payload_; }

private:
  struct Cached {
    firmware::ObservationMessage msg;
    std::string payload;
    double received_at = 0.0;
  };

  void refresh();
  void send(std::string payload);
  ObservationVector build(const Cached& c, double use_time) const;

  EnvSettings settings_;
  transport::Session& session_;
  Clock& clock_;
  ActionFilter filter_;
  std::optional<Cached> latest_;
  double last_action_time_ = 0.0;
  std::string last_payload_;
  std::uint64_t skipped_ = 0;
  std::uint64_t received_ = 0;
  int steps_ = 0;
  bool active_ = false;
};

}  // namespace pendulum::env
