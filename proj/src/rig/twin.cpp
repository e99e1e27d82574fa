#include "pendulum/twin.hpp"

#include <stdexcept>

namespace pendulum {

std::string LoopbackTwin::rig_client_id(int device) { return "rig-" + std::to_string(device); }

LoopbackTwin::LoopbackTwin(const TwinOptions& options)
    : broker_([this] { return clock_.now(); }, options.queue_capacity) {
  if (options.devices < 1) throw std::invalid_argument("twin: need at least one device");
  for (int i = 0; i < options.devices; ++i) {
    const auto id = rig_client_id(i);
    broker_.inject_fault(id, transport::Direction::Uplink, options.observation_fault);
    broker_.inject_fault(id, transport::Direction::Downlink, options.action_fault);
    rigs_.push_back(std::make_unique<VirtualRig>(
        i, options.physics, options.firmware, [this, id] { return broker_.connect(id); },
        options.initial));
    clock_.add(*rigs_.back());
  }
}

std::unique_ptr<transport::Session> LoopbackTwin::connect(const std::string& client_id) {
  return broker_.connect(client_id);
}

}  // namespace pendulum
