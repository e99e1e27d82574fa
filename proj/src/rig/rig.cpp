#include "pendulum/rig.hpp"

#include <algorithm>
#include <cmath>

#include "pendulum/transport/frame.hpp"

namespace pendulum {

namespace {
constexpr std::int64_t kFrameMs = 5;
constexpr std::int64_t kMaxBackoffMs = 5000;
}  // namespace

VirtualRig::VirtualRig(int device_id, PhysicsParams params, firmware::FirmwareConfig cfg,
                       Connector connect, PendulumState initial)
    : device_id_(device_id),
      params_(params),
      connect_(std::move(connect)),
      state_(initial),
      firmware_(cfg, *this, [this](std::string p) { publish(std::move(p)); }) {
  params_.validate();
  state_.frame = 0;
  servo_target_ = std::clamp(initial.phi, -params_.phi_max, params_.phi_max);
  ensure_session(0);
}

void VirtualRig::ensure_session(std::int64_t t_ms) {
  if (session_ && session_->connected()) return;
  if (t_ms < retry_at_ms_) return;
  try {
    session_.reset();
    session_ = connect_();
    session_->subscribe(transport::actions_topic(device_id_));
    backoff_ms_ = 100;
    ++stats_.reconnects;
  } catch (const std::exception&) {
    session_.reset();
    retry_at_ms_ = t_ms + backoff_ms_;
    backoff_ms_ = std::min(backoff_ms_ * 2, kMaxBackoffMs);
  }
}

void VirtualRig::command_servo(double normalized) {
  servo_target_ = normalized * params_.phi_max;
}

void VirtualRig::publish(std::string payload) {
  if (!session_) {
    ++stats_.publish_failures;
    return;
  }
  try {
    session_->publish(transport::observations_topic(device_id_), std::move(payload));
  } catch (const std::exception&) {
    ++stats_.publish_failures;
    session_.reset();
  }
}

void VirtualRig::sense(std::int64_t t_ms) {
  if (start_ms_ < 0) start_ms_ = t_ms;
  // Frame k covers [start + 5(k-1), start + 5k] with the target set before it.
  while (start_ms_ + (state_.frame + 1) * kFrameMs <= t_ms) {
    state_ = step_frame(state_, servo_target_, params_);
  }
  firmware_.on_sense(t_ms);
}

void VirtualRig::act(std::int64_t t_ms) {
  ensure_session(t_ms);
  if (session_) {
    for (auto& msg : session_->poll()) firmware_.receive(std::move(msg.payload));
  }
  firmware_.on_act(t_ms);
}

void VirtualRig::run(const Clock& clock, const std::atomic<bool>& stop) {
  std::int64_t last = static_cast<std::int64_t>(std::floor(clock.now() * 1000.0));
  sense(last);
  act(last);
  ScaledClock pacer(1.0);
  while (!stop.load()) {
    const auto now = static_cast<std::int64_t>(std::floor(clock.now() * 1000.0));
    for (std::int64_t t = last + 1; t <= now; ++t) {
      sense(t);
      act(t);
    }
    last = std::max(last, now);
    pacer.sleep_for(0.0002);
  }
}

}  // namespace pendulum
