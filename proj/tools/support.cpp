#include "support.hpp"

#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>

#ifndef PENDULUM_GIT_REVISION
#define PENDULUM_GIT_REVISION "unknown"
#endif

namespace pendulum::cli {

std::atomic<bool>& stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace {
void on_signal(int) { stop_flag().store(true); }
}  // namespace

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

EnvVariant parse_variant(const std::string& name) {
  if (name == "sim") return EnvVariant::Sim;
  if (name == "sim-delayed") return EnvVariant::SimDelayed;
  if (name == "wire") return EnvVariant::Wire;
  throw UsageError("unknown env '" + name + "' (sim, sim-delayed, wire)");
}

std::string variant_name(EnvVariant v) {
  switch (v) {
    case EnvVariant::Sim: return "sim";
    case EnvVariant::SimDelayed: return "sim-delayed";
    case EnvVariant::Wire: return "wire";
  }
  return "?";
}

EnvHandle make_env(const config::RunConfig& cfg, EnvVariant variant, const std::string& broker,
                   double clock_factor, const std::string& client_id,
                   const PendulumState& initial) {
  EnvHandle h;
  env::EnvSettings s = cfg.env;
  switch (variant) {
    case EnvVariant::Sim:
      s.delay = DelayModel::none();
      h.env = std::make_unique<env::PendulumSim>(s, cfg.physics, cfg.firmware, initial);
      break;
    case EnvVariant::SimDelayed:
      s.delay = DelayModel::paper_uniform();
      h.env = std::make_unique<env::PendulumSim>(s, cfg.physics, cfg.firmware, initial);
      break;
    case EnvVariant::Wire: {
      if (broker.empty()) throw UsageError("--env wire needs --broker host:port");
      const auto [host, port] = transport::parse_endpoint(broker);
      auto clock = std::make_unique<ScaledClock>(clock_factor);
      Clock* c = clock.get();
      h.session = std::make_unique<transport::TcpSession>(host, port, client_id,
                                                          [c] { return c->now(); });
      h.clock = std::move(clock);
      h.env = std::make_unique<env::PendulumWire>(s, *h.session, *h.clock);
      break;
    }
  }
  return h;
}

config::RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return config::load_file(path);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string git_revision() { return PENDULUM_GIT_REVISION; }

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace pendulum::cli
