#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pendulum/agents/training.hpp"
#include "pendulum/env.hpp"
#include "pendulum/firmware.hpp"
#include "pendulum/physics.hpp"
#include "pendulum/transport/tcp.hpp"

namespace pendulum::config {

/// Bad syntax, unknown key or a value of the wrong type. The message names
/// the offending key (or line).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using Value = std::variant<bool, long long, double, std::string, std::vector<double>>;

/// Flat "table.key" -> value map from a TOML-style document. Supports
/// [tables], dotted table names, # comments, bare keys, basic strings,
/// integers, floats, booleans and one-line arrays of numbers.
std::map<std::string, Value> parse_toml(const std::string& text);

/// Everything a command needs to build rigs, environments and learners.
struct RunConfig {
  env::EnvSettings env;
  firmware::FirmwareConfig firmware;
  PhysicsParams physics;
  transport::ChannelFault observation_fault;  // rig -> agent
  transport::ChannelFault action_fault;       // agent -> rig
  agents::TrainConfig train;
  int devices = 1;
  int port = transport::kDefaultPort;
  std::string clock = "real";  // "real" or "accel:N"

  /// Runs every module's validation. Throws ConfigError.
  void validate() const;
};

/// Applies `values` on top of `base`. Unknown keys and type mismatches throw
/// ConfigError.
RunConfig apply(RunConfig base, const std::map<std::string, Value>& values);

RunConfig load_file(const std::string& path, RunConfig base = {});

/// Parses "real" or "accel:N" into a speed factor (1 for real).
double clock_factor(const std::string& spec);

/// Resolved settings as JSON, keyed like the settings file.
nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace pendulum::config
