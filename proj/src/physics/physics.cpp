#include "pendulum/physics.hpp"

#include <algorithm>
#include <cmath>

namespace pendulum {

double PendulumState::time() const {
  return static_cast<double>(frame) * PhysicsParams::frame_dt;
}

bool PendulumState::finite() const {
  return std::isfinite(theta) && std::isfinite(theta_dot) &&
         std::isfinite(phi) && std::isfinite(phi_dot);
}

void PhysicsParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("physics: ") + name +
                                  " must be strictly positive");
    }
  };
  positive(length, "length");
  positive(arm_radius, "arm_radius");
  positive(gravity, "gravity");
  if (!(damping >= 0.0) || !std::isfinite(damping)) {
    throw std::invalid_argument("physics: damping must be non-negative");
  }
  positive(phi_max, "phi_max");
  positive(servo_rate_max, "servo_rate_max");
  positive(servo_tau, "servo_tau");
}

namespace {

struct Derivative {
  double dtheta;
  double domega;
};

// theta'' = -(g/L) sin(theta) - b theta' - (r/L) phi'' cos(theta)
Derivative pendulum_rhs(double theta, double omega, double arm_accel,
                        const PhysicsParams& p) {
  return {omega, -(p.gravity / p.length) * std::sin(theta) - p.damping * omega -
                     (p.arm_radius / p.length) * arm_accel * std::cos(theta)};
}

}  // namespace

PendulumState step_frame(const PendulumState& state, double servo_target,
                         const PhysicsParams& params) {
  if (!state.finite() || !std::isfinite(servo_target)) {
    throw InvalidState("step_frame: non-finite state or servo target");
  }
  constexpr double dt = PhysicsParams::frame_dt;
  const double target = std::clamp(servo_target, -params.phi_max, params.phi_max);

  const double slew = std::clamp((target - state.phi) / params.servo_tau,
                                 -params.servo_rate_max, params.servo_rate_max);
  const double phi_next =
      std::clamp(state.phi + slew * dt, -params.phi_max, params.phi_max);
  const double phi_dot_next = (phi_next - state.phi) / dt;
  const double arm_accel = (phi_dot_next - state.phi_dot) / dt;

  const double th = state.theta;
  const double om = state.theta_dot;
  const Derivative k1 = pendulum_rhs(th, om, arm_accel, params);
  const Derivative k2 = pendulum_rhs(th + 0.5 * dt * k1.dtheta,
                                     om + 0.5 * dt * k1.domega, arm_accel, params);
  const Derivative k3 = pendulum_rhs(th + 0.5 * dt * k2.dtheta,
                                     om + 0.5 * dt * k2.domega, arm_accel, params);
  const Derivative k4 = pendulum_rhs(th + dt * k3.dtheta, om + dt * k3.domega,
                                     arm_accel, params);

  PendulumState next;
  next.theta = th + dt / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta);
  next.theta_dot = om + dt / 6.0 * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega);
  next.phi = phi_next;
  next.phi_dot = phi_dot_next;
  next.frame = state.frame + 1;
  return next;
}

PendulumState step_frames(PendulumState state, double servo_target,
                          const PhysicsParams& params, int n) {
  if (n < 1) {
    throw std::invalid_argument("step_frames: n must be >= 1");
  }
  for (int i = 0; i < n; ++i) {
    state = step_frame(state, servo_target, params);
  }
  return state;
}

double total_energy(const PendulumState& state, const PhysicsParams& params) {
  const double L = params.length;
  return 0.5 * L * L * state.theta_dot * state.theta_dot +
         params.gravity * L * (1.0 - std::cos(state.theta));
}

void DelayModel::validate() const {
  if (pre_frames < 1 || extra_frames_max < 0) {
    throw std::invalid_argument("delay model: pre_frames >= 1 and extra_frames_max >= 0 required");
  }
  if (kind == Kind::None && extra_frames_max != 0) {
    throw std::invalid_argument("delay model: kind None cannot have extra frames");
  }
}

std::string DelayModel::name() const {
  return kind == Kind::None ? "none" : "paper_uniform";
}

DelayedStep step_with_delay(const PendulumState& state, double servo_target,
                            const PhysicsParams& params,
                            const DelayModel& model, int extra) {
  model.validate();
  if (extra < 0 || extra > model.extra_frames_max) {
    throw std::invalid_argument("step_with_delay: extra frames out of range");
  }
  DelayedStep out;
  out.observed = step_frames(state, servo_target, params, model.pre_frames);
  out.extra = extra;
  out.true_end = extra > 0 ? step_frames(out.observed, servo_target, params, extra)
                           : out.observed;
  return out;
}

DelayedStep step_with_delay(const PendulumState& state, double servo_target,
                            const PhysicsParams& params,
                            const DelayModel& model, std::mt19937_64& rng) {
  return step_with_delay(state, servo_target, params, model, model.sample_extra(rng));
}

int DelayModel::sample_extra(std::mt19937_64& rng) const {
  if (kind != Kind::PaperUniform || extra_frames_max <= 0) return 0;
  std::uniform_int_distribution<int> pick(0, extra_frames_max);
  return pick(rng);
}

}  // namespace pendulum
