#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pendulum::firmware {

inline constexpr int kEncoderResolution = 1024;
inline constexpr int kEncoderHalf = kEncoderResolution / 2;

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Absolute encoder reading: 0 hanging down, 512 upright.
struct EncoderCount {
  int value = 0;

  friend bool operator==(EncoderCount, EncoderCount) = default;
};

EncoderCount quantize(double theta, int offset = 0);

/// Shortest signed distance from `prev` to `curr`, in [-512, 512].
/// The antipodal tie resolves to +512.
int delta_counts(EncoderCount prev, EncoderCount curr);

/// Pendulum velocity from encoder deltas, averaged over the last three polls.
class VelocityEstimator {
public:
  static constexpr std::size_t kWindow = 3;

  /// Returns the smoothed velocity in rev/s. Throws std::invalid_argument
  /// when dt <= 0.
  double push(int delta, double dt);
  double last_smoothed() const { return last_smoothed_; }
  const std::deque<double>& history() const { return history_; }
  void clear();

private:
  std::deque<double> history_;
  double last_smoothed_ = 0.0;
};

/// First difference of smoothed velocities, rev/s^2.
double estimate_acceleration(double prev_smoothed, double curr_smoothed, double dt);

struct DiscreteAction {
  int index = 0;  // 0 stop, 1 left, 2 left x2, 3 right, 4 right x2
  friend bool operator==(DiscreteAction, DiscreteAction) = default;
};

struct ContinuousAction {
  double position = 0.0;  // normalized servo position in [-1, 1]
  friend bool operator==(ContinuousAction, ContinuousAction) = default;
};

using Action = std::variant<DiscreteAction, ContinuousAction>;

enum class ActionMode { Discrete, Continuous };

/// Signed step multiplier of a discrete action index.
int discrete_direction(int index);

enum class ConfigKey { EncoderOffset, ObsIntervalMs, ActIntervalMs, Mode, SafetyRps, Stream };

struct ConfigUpdate {
  ConfigKey key;
  double value;  // mode: 0 discrete / 1 continuous; stream: 0 / 1
  friend bool operator==(const ConfigUpdate&, const ConfigUpdate&) = default;
};

using Command = std::variant<DiscreteAction, ContinuousAction, ConfigUpdate>;

struct FirmwareConfig {
  int obs_interval_ms = 14;
  int act_interval_ms = 56;
  ActionMode mode = ActionMode::Discrete;
  int encoder_offset = 0;
  double safety_rps = 2.0;
  bool streaming = true;
  double discrete_increment = 0.1;  // normalized servo units per act tick
  double servo_range_rad = 1.5707963267948966;  // arm angle at command +1

  void validate() const;
  void apply(const ConfigUpdate& update);
};

/// Replaces the action with a stop (discrete) or a hold of the current
/// position (continuous) when the pendulum spins faster than the safety
/// threshold, or when a discrete step would push the servo past +/-1.
Action apply_safety(const Action& action, double servo_command, double pendulum_rps,
                    const FirmwareConfig& cfg);

/// New normalized servo command after one act tick. Throws ProtocolError for
/// an unknown discrete index.
double execute_action(const Action& action, double servo_command,
                      const FirmwareConfig& cfg);

struct ObservationMessage {
  std::int64_t t_ms = 0;
  int encoder = 0;
  double servo = 0.0;
  double pend_velocity = 0.0;      // rev/s
  double pend_acceleration = 0.0;  // rev/s^2
  double arm_velocity = 0.0;       // rev/s
};

/// "t,enc,servo,pv,pa,av" with six decimals on the real-valued fields.
std::string format_observation(const ObservationMessage& msg);

/// Inverse of format_observation. Throws ParseError on malformed input.
ObservationMessage parse_observation_message(std::string_view payload);

/// "m<index>" / "b<position>" wire form of an action.
std::string format_action(const Action& action);

std::string format_config(const ConfigUpdate& update);

/// Parses "m<0..4>", "b<-1..1>" and "cfg:key=value". Throws ParseError.
Command parse_command(std::string_view payload);

/// Hardware seen by the firmware: an absolute encoder and a position servo.
class RigIo {
public:
  virtual ~RigIo() = default;
  virtual double pendulum_angle() const = 0;
  virtual void command_servo(double normalized) = 0;
};

struct FirmwareState {
  Action last_action = DiscreteAction{0};
  double servo_command = 0.0;
  std::optional<EncoderCount> last_count;
  std::int64_t last_poll_ms = 0;
  double servo_at_last_poll = 0.0;
  VelocityEstimator velocity;
  double pend_acceleration = 0.0;
  double arm_velocity = 0.0;
};

struct FirmwareStats {
  std::uint64_t observations_published = 0;
  std::uint64_t polls = 0;
  std::uint64_t act_ticks = 0;
  std::uint64_t commands_received = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t safety_overrides = 0;
};

/// Emulated microcontroller program. Observation streaming and acting run on
/// independent cadences; `receive` may be called from any thread, the tick
/// functions from the firmware task only.
class Firmware {
public:
  using Publish = std::function<void(std::string)>;

  Firmware(FirmwareConfig cfg, RigIo& io, Publish publish);

  void receive(std::string payload);

  /// Encoder poll, velocity update and observation publish, when due.
  void on_sense(std::int64_t t_ms);
  /// Drains the inbox, then runs safety and the last action, when due.
  void on_act(std::int64_t t_ms);

  const FirmwareConfig& config() const { return cfg_; }
  const FirmwareState& state() const { return state_; }
  const FirmwareStats& stats() const { return stats_; }

private:
  void handle(const std::string& payload);
  void poll_encoder(std::int64_t t_ms);

  FirmwareConfig cfg_;
  RigIo& io_;
  Publish publish_;
  FirmwareState state_;
  FirmwareStats stats_;
  std::int64_t next_obs_ms_ = 0;
  std::int64_t next_act_ms_ = 0;

  std::mutex inbox_mutex_;
  std::deque<std::string> inbox_;
};

}  // namespace pendulum::firmware
