#include <chrono>
#include <cstdio>
#include <memory>
#include <thread>
#include <vector>

#include "commands.hpp"
#include "pendulum/rig.hpp"
#include "support.hpp"

namespace pendulum::cli {

int cmd_rig(const RigOptions& o) {
  config::RunConfig cfg = load_config(o.config);
  if (o.devices) cfg.devices = *o.devices;
  if (o.clock) cfg.clock = *o.clock;
  if (o.port) cfg.port = *o.port;
  cfg.validate();
  const double factor = config::clock_factor(cfg.clock);

  std::unique_ptr<transport::TcpBroker> broker;
  std::string host = "127.0.0.1";
  int port = cfg.port;
  if (o.connect.empty()) {
    broker = std::make_unique<transport::TcpBroker>(cfg.port);
    broker->start();
    port = broker->port();
    for (int i = 0; i < cfg.devices; ++i) {
      const auto id = "rig-" + std::to_string(i);
      broker->router().set_fault(id, transport::Direction::Uplink, cfg.observation_fault);
      broker->router().set_fault(id, transport::Direction::Downlink, cfg.action_fault);
    }
    std::printf("broker listening on port %d\n", port);
  } else {
    std::tie(host, port) = transport::parse_endpoint(o.connect);
    std::printf("using broker %s:%d\n", host.c_str(), port);
  }

  ScaledClock clock(factor);
  std::atomic<bool>& stop = stop_flag();
  std::vector<std::unique_ptr<VirtualRig>> rigs;
  std::vector<std::thread> threads;
  for (int i = 0; i < cfg.devices; ++i) {
    const auto id = "rig-" + std::to_string(i);
    rigs.push_back(std::make_unique<VirtualRig>(
        i, cfg.physics, cfg.firmware,
        [host, port, id, &clock] {
          return std::make_unique<transport::TcpSession>(host, port, id, [&clock] { return clock.now(); });
        }));
    std::printf("device %d: %s -> %s\n", i, transport::actions_topic(i).c_str(),
                transport::observations_topic(i).c_str());
  }
  std::printf("clock %s\n", cfg.clock.c_str());
  std::fflush(stdout);
  for (auto& rig : rigs) threads.emplace_back([&rig, &clock, &stop] { rig->run(clock, stop); });

  const auto t0 = std::chrono::steady_clock::now();
  while (!stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (o.duration_s > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= o.duration_s) {
      stop = true;
    }
  }
  for (auto& t : threads) t.join();
  for (const auto& rig : rigs) {
    const auto& st = rig->firmware().stats();
    std::printf("device %d: %llu commands, %llu observations\n", rig->device_id(),
                static_cast<unsigned long long>(st.commands_received),
                static_cast<unsigned long long>(st.observations_published));
  }
  if (broker) broker->stop();
  return kExitOk;
}

}  // namespace pendulum::cli
