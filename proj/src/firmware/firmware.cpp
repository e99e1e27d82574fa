#include "pendulum/firmware.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

namespace pendulum::firmware {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLimitSlack = 1e-9;

int wrap_count(long long v) {
  const long long m = v % kEncoderResolution;
  return static_cast<int>(m < 0 ? m + kEncoderResolution : m);
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

EncoderCount quantize(double theta, int offset) {
  double reduced = std::fmod(theta, kTwoPi);
  if (reduced < 0.0) reduced += kTwoPi;
  const auto raw = static_cast<long long>(std::llround(reduced / kTwoPi * kEncoderResolution));
  return {wrap_count(raw + offset)};
}

int delta_counts(EncoderCount prev, EncoderCount curr) {
  int d = curr.value - prev.value;
  if (d > kEncoderHalf) d -= kEncoderResolution;
  if (d < -kEncoderHalf) d += kEncoderResolution;
  if (d == -kEncoderHalf) d = kEncoderHalf;
  return d;
}

double VelocityEstimator::push(int delta, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("velocity estimate: dt must be positive");
  }
  history_.push_back(static_cast<double>(delta) / kEncoderResolution / dt);
  while (history_.size() > kWindow) history_.pop_front();
  last_smoothed_ = std::accumulate(history_.begin(), history_.end(), 0.0) /
                   static_cast<double>(history_.size());
  return last_smoothed_;
}

void VelocityEstimator::clear() {
  history_.clear();
  last_smoothed_ = 0.0;
}

double estimate_acceleration(double prev_smoothed, double curr_smoothed, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("acceleration estimate: dt must be positive");
  }
  return (curr_smoothed - prev_smoothed) / dt;
}

int discrete_direction(int index) {
  static constexpr std::array<int, 5> kDirections{0, -1, -2, 1, 2};
  if (index < 0 || index >= static_cast<int>(kDirections.size())) {
    throw ProtocolError("unknown discrete action index " + std::to_string(index));
  }
  return kDirections[static_cast<std::size_t>(index)];
}

void FirmwareConfig::validate() const {
  if (obs_interval_ms < 1 || act_interval_ms < 1) {
    throw std::invalid_argument("firmware: intervals must be >= 1 ms");
  }
  if (!(safety_rps > 0.0)) {
    throw std::invalid_argument("firmware: safety_rps must be positive");
  }
  if (!(discrete_increment > 0.0) || discrete_increment > 1.0) {
    throw std::invalid_argument("firmware: discrete_increment must be in (0, 1]");
  }
  if (!(servo_range_rad > 0.0)) {
    throw std::invalid_argument("firmware: servo_range_rad must be positive");
  }
}

void FirmwareConfig::apply(const ConfigUpdate& update) {
  switch (update.key) {
    case ConfigKey::EncoderOffset:
      encoder_offset = static_cast<int>(update.value);
      break;
    case ConfigKey::ObsIntervalMs:
      obs_interval_ms = static_cast<int>(update.value);
      break;
    case ConfigKey::ActIntervalMs:
      act_interval_ms = static_cast<int>(update.value);
      break;
    case ConfigKey::Mode:
      mode = update.value != 0.0 ? ActionMode::Continuous : ActionMode::Discrete;
      break;
    case ConfigKey::SafetyRps:
      safety_rps = update.value;
      break;
    case ConfigKey::Stream:
      streaming = update.value != 0.0;
      break;
  }
}

Action apply_safety(const Action& action, double servo_command, double pendulum_rps,
                    const FirmwareConfig& cfg) {
  const bool continuous = std::holds_alternative<ContinuousAction>(action);
  const Action stop = continuous ? Action{ContinuousAction{servo_command}}
                                 : Action{DiscreteAction{0}};
  if (std::abs(pendulum_rps) > cfg.safety_rps) return stop;
  if (const auto* d = std::get_if<DiscreteAction>(&action)) {
    if (d->index < 0 || d->index > 4) return action;  // rejected by execute_action
    const double next = servo_command + discrete_direction(d->index) * cfg.discrete_increment;
    if (next > 1.0 + kLimitSlack || next < -1.0 - kLimitSlack) return stop;
  }
  return action;
}

double execute_action(const Action& action, double servo_command,
                      const FirmwareConfig& cfg) {
  if (const auto* d = std::get_if<DiscreteAction>(&action)) {
    const double next = servo_command + discrete_direction(d->index) * cfg.discrete_increment;
    return std::clamp(next, -1.0, 1.0);
  }
  return std::clamp(std::get<ContinuousAction>(action).position, -1.0, 1.0);
}

std::string format_observation(const ObservationMessage& msg) {
  std::array<char, 192> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%lld,%d,%.6f,%.6f,%.6f,%.6f",
                              static_cast<long long>(msg.t_ms), msg.encoder, msg.servo,
                              msg.pend_velocity, msg.pend_acceleration, msg.arm_velocity);
  return std::string(buf.data(), static_cast<std::size_t>(std::max(n, 0)));
}

ObservationMessage parse_observation_message(std::string_view payload) {
  const auto fields = split(payload, ',');
  if (fields.size() != 6) {
    throw ParseError("observation: expected 6 fields, got " + std::to_string(fields.size()));
  }
  const auto t = parse_number<long long>(fields[0]);
  const auto enc = parse_number<int>(fields[1]);
  const auto servo = parse_number<double>(fields[2]);
  const auto pv = parse_number<double>(fields[3]);
  const auto pa = parse_number<double>(fields[4]);
  const auto av = parse_number<double>(fields[5]);
  if (!t || !enc || !servo || !pv || !pa || !av) {
    throw ParseError("observation: malformed field in '" + std::string(payload) + "'");
  }
  if (*enc < 0 || *enc >= kEncoderResolution) {
    throw ParseError("observation: encoder count out of range");
  }
  return {*t, *enc, *servo, *pv, *pa, *av};
}

std::string format_action(const Action& action) {
  if (const auto* d = std::get_if<DiscreteAction>(&action)) {
    return "m" + std::to_string(d->index);
  }
  std::array<char, 32> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "b%.6f",
                              std::get<ContinuousAction>(action).position);
  return std::string(buf.data(), static_cast<std::size_t>(std::max(n, 0)));
}

namespace {

struct ConfigName {
  std::string_view name;
  ConfigKey key;
};

constexpr std::array<ConfigName, 6> kConfigNames{{
    {"encoder_offset", ConfigKey::EncoderOffset},
    {"obs_interval_ms", ConfigKey::ObsIntervalMs},
    {"act_interval_ms", ConfigKey::ActIntervalMs},
    {"mode", ConfigKey::Mode},
    {"safety_rps", ConfigKey::SafetyRps},
    {"stream", ConfigKey::Stream},
}};

ConfigUpdate parse_config(std::string_view body) {
  const auto eq = body.find('=');
  if (eq == std::string_view::npos) throw ParseError("config: missing '='");
  const auto name = body.substr(0, eq);
  const auto value = body.substr(eq + 1);
  const auto it = std::find_if(kConfigNames.begin(), kConfigNames.end(),
                               [&](const ConfigName& c) { return c.name == name; });
  if (it == kConfigNames.end()) {
    throw ParseError("config: unknown key '" + std::string(name) + "'");
  }
  switch (it->key) {
    case ConfigKey::EncoderOffset: {
      const auto v = parse_number<int>(value);
      if (!v) throw ParseError("config: encoder_offset must be an integer");
      return {it->key, static_cast<double>(*v)};
    }
    case ConfigKey::ObsIntervalMs:
    case ConfigKey::ActIntervalMs: {
      const auto v = parse_number<int>(value);
      if (!v || *v < 1) throw ParseError("config: interval must be an integer >= 1");
      return {it->key, static_cast<double>(*v)};
    }
    case ConfigKey::Mode:
      if (value == "d") return {it->key, 0.0};
      if (value == "c") return {it->key, 1.0};
      throw ParseError("config: mode must be 'd' or 'c'");
    case ConfigKey::SafetyRps: {
      const auto v = parse_number<double>(value);
      if (!v || !(*v > 0.0)) throw ParseError("config: safety_rps must be positive");
      return {it->key, *v};
    }
    case ConfigKey::Stream:
      if (value == "0") return {it->key, 0.0};
      if (value == "1") return {it->key, 1.0};
      throw ParseError("config: stream must be 0 or 1");
  }
  throw ParseError("config: unreachable");
}

}  // namespace

std::string format_config(const ConfigUpdate& update) {
  const auto it = std::find_if(kConfigNames.begin(), kConfigNames.end(),
                               [&](const ConfigName& c) { return c.key == update.key; });
  std::string out = "cfg:" + std::string(it->name) + "=";
  switch (update.key) {
    case ConfigKey::Mode:
      return out + (update.value != 0.0 ? "c" : "d");
    case ConfigKey::Stream:
      return out + (update.value != 0.0 ? "1" : "0");
    case ConfigKey::SafetyRps: {
      std::array<char, 32> buf{};
      std::snprintf(buf.data(), buf.size(), "%.6f", update.value);
      return out + buf.data();
    }
    default:
      return out + std::to_string(static_cast<long long>(update.value));
  }
}

Command parse_command(std::string_view payload) {
  if (payload.empty()) throw ParseError("command: empty payload");
  if (payload.starts_with("cfg:")) return parse_config(payload.substr(4));
  const char tag = payload.front();
  const auto body = payload.substr(1);
  if (tag == 'm') {
    const auto v = parse_number<int>(body);
    if (!v || *v < 0 || *v > 4) throw ParseError("command: discrete action must be 0..4");
    return DiscreteAction{*v};
  }
  if (tag == 'b') {
    const auto v = parse_number<double>(body);
    if (!v || *v < -1.0 || *v > 1.0) {
      throw ParseError("command: continuous action must be in [-1, 1]");
    }
    return ContinuousAction{*v};
  }
  throw ParseError("command: unknown prefix '" + std::string(1, tag) + "'");
}

Firmware::Firmware(FirmwareConfig cfg, RigIo& io, Publish publish)
    : cfg_(cfg), io_(io), publish_(std::move(publish)) {
  cfg_.validate();
}

void Firmware::receive(std::string payload) {
  std::lock_guard lock(inbox_mutex_);
  inbox_.push_back(std::move(payload));
}

void Firmware::handle(const std::string& payload) {
  ++stats_.commands_received;
  Command cmd;
  try {
    cmd = parse_command(payload);
  } catch (const ParseError&) {
    ++stats_.parse_errors;
    return;
  }
  if (const auto* update = std::get_if<ConfigUpdate>(&cmd)) {
    const auto before = cfg_;
    cfg_.apply(*update);
    if (update->key == ConfigKey::ObsIntervalMs) {
      next_obs_ms_ += cfg_.obs_interval_ms - before.obs_interval_ms;
    } else if (update->key == ConfigKey::ActIntervalMs) {
      next_act_ms_ += cfg_.act_interval_ms - before.act_interval_ms;
    } else if (update->key == ConfigKey::Mode && cfg_.mode != before.mode) {
      state_.last_action = cfg_.mode == ActionMode::Discrete
                               ? Action{DiscreteAction{0}}
                               : Action{ContinuousAction{state_.servo_command}};
    }
    return;
  }
  const bool continuous = std::holds_alternative<ContinuousAction>(cmd);
  if (continuous != (cfg_.mode == ActionMode::Continuous)) {
    ++stats_.protocol_errors;
    return;
  }
  if (continuous) {
    state_.last_action = std::get<ContinuousAction>(cmd);
  } else {
    state_.last_action = std::get<DiscreteAction>(cmd);
  }
}

void Firmware::poll_encoder(std::int64_t t_ms) {
  ++stats_.polls;
  const EncoderCount count = quantize(io_.pendulum_angle(), cfg_.encoder_offset);
  if (state_.last_count && t_ms > state_.last_poll_ms) {
    const double dt = static_cast<double>(t_ms - state_.last_poll_ms) / 1000.0;
    const double prev = state_.velocity.last_smoothed();
    const double curr = state_.velocity.push(delta_counts(*state_.last_count, count), dt);
    state_.pend_acceleration = estimate_acceleration(prev, curr, dt);
    state_.arm_velocity = (state_.servo_command - state_.servo_at_last_poll) *
                          cfg_.servo_range_rad / (2.0 * std::numbers::pi) / dt;
  }
  state_.last_count = count;
  state_.last_poll_ms = t_ms;
  state_.servo_at_last_poll = state_.servo_command;
}

void Firmware::on_sense(std::int64_t t_ms) {
  if (t_ms < next_obs_ms_) return;
  next_obs_ms_ = t_ms + cfg_.obs_interval_ms;
  poll_encoder(t_ms);
  if (!cfg_.streaming) return;
  ObservationMessage msg;
  msg.t_ms = t_ms;
  msg.encoder = state_.last_count->value;
  msg.servo = state_.servo_command;
  msg.pend_velocity = state_.velocity.last_smoothed();
  msg.pend_acceleration = state_.pend_acceleration;
  msg.arm_velocity = state_.arm_velocity;
  publish_(format_observation(msg));
  ++stats_.observations_published;
}

void Firmware::on_act(std::int64_t t_ms) {
  std::deque<std::string> pending;
  {
    std::lock_guard lock(inbox_mutex_);
    pending.swap(inbox_);
  }
  for (const auto& payload : pending) handle(payload);

  if (t_ms < next_act_ms_) return;
  next_act_ms_ = t_ms + cfg_.act_interval_ms;
  ++stats_.act_ticks;

  const Action safe = apply_safety(state_.last_action, state_.servo_command,
                                   state_.velocity.last_smoothed(), cfg_);
  if (!(safe == state_.last_action)) ++stats_.safety_overrides;
  try {
    state_.servo_command = execute_action(safe, state_.servo_command, cfg_);
  } catch (const ProtocolError&) {
    ++stats_.protocol_errors;
    state_.last_action = DiscreteAction{0};
    return;
  }
  io_.command_servo(state_.servo_command);
}

}  // namespace pendulum::firmware
