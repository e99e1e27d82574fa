#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace pendulum {

/// Raised when a state or command contains non-finite values.
class InvalidState : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Rotary pendulum on a servo-driven arm.
///
/// The pendulum angle is measured from the hanging position, counter-clockwise
/// positive, and is never wrapped. The arm angle is 0 at the servo center.
struct PendulumState {
  double theta = 0.0;      // rad
  double theta_dot = 0.0;  // rad/s
  double phi = 0.0;        // rad
  double phi_dot = 0.0;    // rad/s
  std::int64_t frame = 0;  // integration frames since t = 0

  double time() const;
  bool finite() const;

  friend bool operator==(const PendulumState&, const PendulumState&) = default;
};

struct PhysicsParams {
  static constexpr double frame_dt = 0.005;

  double length = 0.38;            // effective pendulum length, m
  double arm_radius = 0.40;        // servo shaft to encoder, m
  double gravity = 9.81;           // m/s^2
  double damping = 0.05;           // viscous, 1/s
  double phi_max = std::numbers::pi / 2.0;
  double servo_rate_max = 5.236;   // rad/s (0.20 s / 60 deg)
  double servo_tau = 0.02;         // first-order servo lag, s

  /// Throws std::invalid_argument unless every field is strictly positive
  /// (damping may be zero).
  void validate() const;
};

/// Advances one 5 ms frame. The arm follows a rate-limited first-order lag
/// toward `servo_target`; the pendulum is integrated with RK4 using the arm
/// acceleration of the frame as a constant forcing term.
PendulumState step_frame(const PendulumState& state, double servo_target,
                         const PhysicsParams& params);

PendulumState step_frames(PendulumState state, double servo_target,
                          const PhysicsParams& params, int n);

/// Energy of a unit point mass with the arm frozen. Zero when hanging at rest.
double total_energy(const PendulumState& state, const PhysicsParams& params);

struct DelayModel {
  enum class Kind { None, PaperUniform };

  Kind kind = Kind::None;
  int pre_frames = 12;
  int extra_frames_max = 0;

  static DelayModel none() { return {Kind::None, 12, 0}; }
  static DelayModel paper_uniform() { return {Kind::PaperUniform, 6, 2}; }

  void validate() const;
  std::string name() const;
  /// Uniform draw of the extra frame count.
  int sample_extra(std::mt19937_64& rng) const;
};

struct DelayedStep {
  PendulumState observed;
  PendulumState true_end;
  int extra = 0;
};

/// Advances `pre_frames`, snapshots the observation, then keeps moving for a
/// uniformly drawn number of extra frames in [0, extra_frames_max].
DelayedStep step_with_delay(const PendulumState& state, double servo_target,
                            const PhysicsParams& params,
                            const DelayModel& model, std::mt19937_64& rng);

/// Same as above with the extra frame count supplied by the caller.
DelayedStep step_with_delay(const PendulumState& state, double servo_target,
                            const PhysicsParams& params,
                            const DelayModel& model, int extra);

}  // namespace pendulum
