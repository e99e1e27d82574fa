#include "pendulum/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pendulum/transport/frame.hpp"

namespace pendulum::env {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kSimStepFrames = 12;

Action resolve_action(const Action& action, ActionMode mode, ActionFilter& filter) {
  if (const auto* d = std::get_if<DiscreteAction>(&action)) {
    if (mode != ActionMode::Discrete) {
      throw std::invalid_argument("discrete action sent to a continuous environment");
    }
    if (d->index < 0 || d->index > 4) {
      throw std::invalid_argument("discrete action index must be in [0, 4]");
    }
    return action;
  }
  if (mode != ActionMode::Continuous) {
    throw std::invalid_argument("continuous action sent to a discrete environment");
  }
  const double u = std::get<ContinuousAction>(action).position;
  if (!std::isfinite(u)) throw std::invalid_argument("continuous action must be finite");
  return ContinuousAction{filter.apply(std::clamp(u, -1.0, 1.0))};
}

}  // namespace

double wrap_angle(double angle) {
  double a = std::fmod(angle + kPi, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a - kPi;
}

double theta_up_from_bottom(double theta) { return wrap_angle(theta - kPi); }

double reward(double theta_up, double omega_rps) {
  return -theta_up * theta_up - 0.5 * omega_rps * omega_rps;
}

double ActionFilter::apply(double u) {
  a_bar = a_bar * c + u * (1.0 - c);
  return a_bar;
}

std::size_t FeatureFlags::count() const {
  return 2 + static_cast<std::size_t>(pend_velocity) + static_cast<std::size_t>(pend_acceleration) +
         static_cast<std::size_t>(arm_velocity) + static_cast<std::size_t>(time_since_last_action) +
         static_cast<std::size_t>(observation_age);
}

double ObservationVector::theta() const {
  return static_cast<double>(encoder_count) / firmware::kEncoderResolution * kTwoPi;
}

std::vector<double> ObservationVector::values(const FeatureFlags& flags) const {
  std::vector<double> out{static_cast<double>(encoder_count), servo_position};
  if (flags.pend_velocity) out.push_back(pend_velocity);
  if (flags.pend_acceleration) out.push_back(pend_acceleration);
  if (flags.arm_velocity) out.push_back(arm_velocity);
  if (flags.time_since_last_action) out.push_back(time_since_last_action);
  if (flags.observation_age) out.push_back(observation_age);
  return out;
}

std::optional<ObservationVector> parse_observation(const std::string& payload,
                                                   double receive_time, double use_time,
                                                   double last_action_time) {
  firmware::ObservationMessage msg;
  try {
    msg = firmware::parse_observation_message(payload);
  } catch (const firmware::ParseError&) {
    return std::nullopt;
  }
  ObservationVector obs;
  obs.encoder_count = msg.encoder;
  obs.servo_position = msg.servo;
  obs.pend_velocity = msg.pend_velocity;
  obs.pend_acceleration = msg.pend_acceleration;
  obs.arm_velocity = msg.arm_velocity;
  obs.observation_age = std::max(0.0, use_time - receive_time);
  obs.time_since_last_action = std::max(0.0, use_time - last_action_time);
  return obs;
}

void EnvSettings::validate() const {
  if (step_time_ms < 1) throw std::invalid_argument("env: step_time_ms must be >= 1");
  if (episode_steps < 1) throw std::invalid_argument("env: episode_steps must be >= 1");
  if (!(filter_c >= 0.0 && filter_c < 1.0)) throw std::invalid_argument("env: filter c must be in [0, 1)");
  if (stale_limit_ms < 1 || reset_timeout_ms < 1 || reset_wait_ms < 0) {
    throw std::invalid_argument("env: invalid timing limits");
  }
  delay.validate();
}

int EnvSettings::reset_steps(int step_ms) const {
  return (reset_wait_ms + step_ms - 1) / step_ms;
}

// ---------------------------------------------------------------------------

PendulumSim::PendulumSim(EnvSettings settings, PhysicsParams params,
                         firmware::FirmwareConfig actuator, PendulumState initial)
    : settings_(settings),
      params_(params),
      actuator_(actuator),
      state_(initial),
      rng_(settings.seed) {
  settings_.validate();
  params_.validate();
  actuator_.validate();
  filter_.c = settings_.filter_c;
  origin_frame_ = state_.frame;
  poll_due();
}

void PendulumSim::poll_due() {
  // A poll at millisecond t sees the last frame completed by t.
  const std::int64_t frame_ms = 5;
  const std::int64_t horizon = (state_.frame - origin_frame_ + 1) * frame_ms;
  while (next_poll_ms_ < horizon) {
    const auto count = firmware::quantize(state_.theta, actuator_.encoder_offset);
    if (last_count_ && next_poll_ms_ > last_poll_ms_) {
      speed_.push(firmware::delta_counts(*last_count_, count),
                  static_cast<double>(next_poll_ms_ - last_poll_ms_) / 1000.0);
    }
    last_count_ = count;
    last_poll_ms_ = next_poll_ms_;
    next_poll_ms_ += actuator_.obs_interval_ms;
  }
}

void PendulumSim::advance(int frames, double target) {
  for (int i = 0; i < frames; ++i) {
    state_ = step_frame(state_, target, params_);
    poll_due();
  }
}

std::string PendulumSim::name() const {
  return settings_.delay.kind == DelayModel::Kind::None ? "sim" : "sim-delayed";
}

ObservationVector PendulumSim::observe(const PendulumState& s, double prev_theta_dot,
                                       double dt, double since_action, double age) const {
  ObservationVector obs;
  obs.encoder_count = firmware::quantize(s.theta, actuator_.encoder_offset).value;
  obs.servo_position = servo_command_;
  obs.pend_velocity = s.theta_dot / kTwoPi;
  obs.pend_acceleration = dt > 0.0 ? (s.theta_dot - prev_theta_dot) / dt / kTwoPi : 0.0;
  obs.arm_velocity = s.phi_dot / kTwoPi;
  obs.time_since_last_action = since_action;
  obs.observation_age = age;
  return obs;
}

ObservationVector PendulumSim::reset() {
  steps_ = 0;
  filter_.reset();
  active_ = true;
  constexpr double dt = PhysicsParams::frame_dt;
  if (settings_.reset_mode == ResetMode::Randomized) {
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    std::uniform_real_distribution<double> spin(-1.0, 1.0);
    const auto frame = state_.frame;
    state_ = PendulumState{};
    state_.theta = angle(rng_);
    state_.theta_dot = spin(rng_);
    state_.frame = frame;
    servo_command_ = 0.0;
    speed_.clear();
    last_count_.reset();
    origin_frame_ = frame;
    last_poll_ms_ = next_poll_ms_ = 0;
    poll_due();
    return observe(state_, state_.theta_dot, 0.0, 0.0, 0.0);
  }
  // Stop: hold the current servo command while the pendulum swings freely.
  const int hold_steps = settings_.reset_steps(kSimStepFrames * 5);
  const double target = servo_command_ * params_.phi_max;
  double prev = state_.theta_dot;
  for (int i = 0; i < hold_steps; ++i) {
    prev = state_.theta_dot;
    advance(kSimStepFrames, target);
  }
  return observe(state_, prev, kSimStepFrames * dt, hold_steps * kSimStepFrames * dt, 0.0);
}

StepResult PendulumSim::step(const Action& action) {
  if (!active_) throw std::logic_error("step called outside an active episode; call reset()");
  constexpr double dt = PhysicsParams::frame_dt;

  const Action requested = resolve_action(action, settings_.mode, filter_);
  const Action safe =
      firmware::apply_safety(requested, servo_command_, speed_.last_smoothed(), actuator_);
  servo_command_ = firmware::execute_action(safe, servo_command_, actuator_);

  const double prev_theta_dot = state_.theta_dot;
  const double target = servo_command_ * params_.phi_max;
  DelayedStep moved;
  moved.extra = settings_.delay.sample_extra(rng_);
  advance(settings_.delay.pre_frames, target);
  moved.observed = state_;
  advance(moved.extra, target);
  moved.true_end = state_;
  const double observe_dt = settings_.delay.pre_frames * dt;

  StepResult out;
  out.observation = observe(moved.observed, prev_theta_dot, observe_dt, observe_dt,
                            moved.extra * dt);
  out.reward = reward(theta_up_from_bottom(moved.observed.theta),
                      moved.observed.theta_dot / kTwoPi);
  ++steps_;
  out.done = steps_ >= settings_.episode_steps;
  if (out.done) active_ = false;
  out.info.sim_time = state_.time();
  out.info.message_time_ms = std::llround(moved.observed.time() * 1000.0);
  out.info.step_duration = (settings_.delay.pre_frames + moved.extra) * dt;
  out.info.end_to_end_age = moved.extra * dt;
  out.info.extra_frames = moved.extra;
  out.info.safety_triggered = !(safe == requested);
  return out;
}

// ---------------------------------------------------------------------------

PendulumWire::PendulumWire(EnvSettings settings, transport::Session& session, Clock& clock)
    : settings_(settings), session_(session), clock_(clock) {
  settings_.validate();
  filter_.c = settings_.filter_c;
  session_.subscribe(transport::observations_topic(settings_.device_id));
  send(firmware::format_config(
      {firmware::ConfigKey::Mode, settings_.mode == ActionMode::Continuous ? 1.0 : 0.0}));
}

void PendulumWire::send(std::string payload) {
  last_payload_ = payload;
  try {
    session_.publish(transport::actions_topic(settings_.device_id), std::move(payload));
  } catch (const std::exception& e) {
    throw ConnectionLost(std::string("transport down: ") + e.what());
  }
}

void PendulumWire::refresh() {
  for (auto& msg : session_.poll()) {
    ++received_;
    try {
      Cached c{firmware::parse_observation_message(msg.payload), std::move(msg.payload),
               msg.received_at};
      latest_ = std::move(c);
    } catch (const firmware::ParseError&) {
      ++skipped_;
    }
  }
}

ObservationVector PendulumWire::build(const Cached& c, double use_time) const {
  ObservationVector obs;
  obs.encoder_count = c.msg.encoder;
  obs.servo_position = c.msg.servo;
  obs.pend_velocity = c.msg.pend_velocity;
  obs.pend_acceleration = c.msg.pend_acceleration;
  obs.arm_velocity = c.msg.arm_velocity;
  obs.observation_age = std::max(0.0, use_time - c.received_at);
  obs.time_since_last_action = std::max(0.0, use_time - last_action_time_);
  return obs;
}

ObservationVector PendulumWire::reset() {
  steps_ = 0;
  filter_.reset();
  const double start = clock_.now();
  if (settings_.mode == ActionMode::Discrete) send(firmware::format_action(DiscreteAction{0}));
  last_action_time_ = start;
  const double step_s = settings_.step_time_ms / 1000.0;
  clock_.sleep_for(settings_.reset_steps(settings_.step_time_ms) * step_s);
  const double deadline = clock_.now() + settings_.reset_timeout_ms / 1000.0;
  while (true) {
    if (!session_.connected()) throw ConnectionLost("reset: transport disconnected");
    refresh();
    if (latest_ && latest_->received_at >= start) break;
    if (clock_.now() >= deadline) throw ConnectionLost("reset: no observation within timeout");
    clock_.sleep_for(step_s);
  }
  active_ = true;
  return build(*latest_, clock_.now());
}

StepResult PendulumWire::step(const Action& action) {
  if (!active_) throw std::logic_error("step called outside an active episode; call reset()");
  const Action resolved = resolve_action(action, settings_.mode, filter_);
  const double sent = clock_.now();
  send(firmware::format_action(resolved));
  last_action_time_ = sent;

  clock_.sleep_for(settings_.step_time_ms / 1000.0);
  refresh();
  const double now = clock_.now();
  if (!latest_ || now - latest_->received_at > settings_.stale_limit_ms / 1000.0) {
    active_ = false;
    throw ConnectionLost("observation stream stale");
  }

  StepResult out;
  out.observation = build(*latest_, now);
  out.reward = reward(theta_up_from_bottom(out.observation.theta()),
                      out.observation.pend_velocity);
  ++steps_;
  out.done = steps_ >= settings_.episode_steps;
  if (out.done) active_ = false;
  out.info.message_time_ms = latest_->msg.t_ms;
  out.info.sim_time = now;
  out.info.step_duration = now - sent;
  out.info.end_to_end_age = now - static_cast<double>(latest_->msg.t_ms) / 1000.0;
  out.info.skipped_messages = skipped_;
  return out;
}

}  // namespace pendulum::env
