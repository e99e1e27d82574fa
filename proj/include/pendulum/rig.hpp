#pragma once

#include <atomic>
#include <functional>
#include <memory>

#include "pendulum/clock.hpp"
#include "pendulum/firmware.hpp"
#include "pendulum/physics.hpp"
#include "pendulum/transport/channel.hpp"

namespace pendulum {

struct RigStats {
  std::uint64_t publish_failures = 0;
  std::uint64_t reconnects = 0;
};

/// Physics plus emulated firmware attached to the bus: the software twin of
/// one apparatus. Subscribes to its actions topic and streams observations.
class VirtualRig final : public firmware::RigIo, public Ticker {
public:
  using Connector = std::function<std::unique_ptr<transport::Session>()>;

  VirtualRig(int device_id, PhysicsParams params, firmware::FirmwareConfig cfg,
             Connector connect, PendulumState initial = {});

  void sense(std::int64_t t_ms) override;
  void act(std::int64_t t_ms) override;

  double pendulum_angle() const override { return state_.theta; }
  void command_servo(double normalized) override;

  /// Ticks every elapsed millisecond of `clock` until `stop` becomes true.
  void run(const Clock& clock, const std::atomic<bool>& stop);

  int device_id() const { return device_id_; }
  const PendulumState& state() const { return state_; }
  const PhysicsParams& params() const { return params_; }
  const firmware::Firmware& firmware() const { return firmware_; }
  const RigStats& stats() const { return stats_; }
  bool connected() const { return session_ && session_->connected(); }

private:
  void publish(std::string payload);
  void ensure_session(std::int64_t t_ms);

  int device_id_;
  PhysicsParams params_;
  Connector connect_;
  std::unique_ptr<transport::Session> session_;
  PendulumState state_;
  double servo_target_ = 0.0;
  std::int64_t start_ms_ = -1;
  std::int64_t retry_at_ms_ = 0;
  std::int64_t backoff_ms_ = 100;
  RigStats stats_;
  firmware::Firmware firmware_;
};

}  // namespace pendulum
