#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pendulum/clock.hpp"
#include "pendulum/rig.hpp"
#include "pendulum/transport/broker.hpp"

namespace pendulum {

struct TwinOptions {
  int devices = 1;
  PhysicsParams physics;
  firmware::FirmwareConfig firmware;
  PendulumState initial;
  transport::ChannelFault observation_fault;  // rig -> broker
  transport::ChannelFault action_fault;       // broker -> rig
  std::size_t queue_capacity = 1024;
};

/// Loopback broker plus virtual rigs ticked by one deterministic clock.
/// Rig `i` connects as "rig-<i>" and serves pendulum/<i>/*.
class LoopbackTwin {
public:
  explicit LoopbackTwin(const TwinOptions& options = {});

  VirtualClock& clock() { return clock_; }
  transport::LoopbackBroker& broker() { return broker_; }
  VirtualRig& rig(int device = 0) { return *rigs_.at(device); }
  std::unique_ptr<transport::Session> connect(const std::string& client_id);

  static std::string rig_client_id(int device);

private:
  VirtualClock clock_;
  transport::LoopbackBroker broker_;
  std::vector<std::unique_ptr<VirtualRig>> rigs_;
};

}  // namespace pendulum
