#pragma once

#include <atomic>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pendulum/clock.hpp"
#include "pendulum/config.hpp"
#include "pendulum/env.hpp"
#include "pendulum/transport/tcp.hpp"

namespace pendulum::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or inputs; reported with exit code 2.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Set by SIGINT / SIGTERM.
std::atomic<bool>& stop_flag();
void install_signal_handlers();

enum class EnvVariant { Sim, SimDelayed, Wire };

EnvVariant parse_variant(const std::string& name);
std::string variant_name(EnvVariant v);

/// An environment plus whatever it needs to stay alive (clock, socket).
struct EnvHandle {
  std::unique_ptr<Clock> clock;
  std::unique_ptr<transport::TcpSession> session;
  std::unique_ptr<env::Environment> env;
};

/// Sim variants ignore `broker`. The wire variant connects to `broker`
/// ("host[:port]") and runs on a clock `clock_factor` times real time,
/// which must match the rig's clock.
EnvHandle make_env(const config::RunConfig& cfg, EnvVariant variant, const std::string& broker,
                   double clock_factor, const std::string& client_id,
                   const PendulumState& initial = {});

/// Base configuration: defaults, then the optional settings file.
config::RunConfig load_config(const std::string& path);

std::string utc_timestamp();
std::string git_revision();

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace pendulum::cli
