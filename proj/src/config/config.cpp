#include "pendulum/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

namespace pendulum::config {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool bare_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return s.front() != '.' && s.back() != '.';
}

[[noreturn]] void fail_line(int line, const std::string& what) {
  throw ConfigError("line " + std::to_string(line) + ": " + what);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::optional<double> parse_number(const std::string& s, bool& integral) {
  std::string t;
  for (char c : s) {
    if (c != '_') t += c;
  }
  if (t.empty()) return std::nullopt;
  integral = t.find_first_of(".eE") == std::string::npos;
  if (integral) {
    long long v = 0;
    const char* first = t.data() + (t[0] == '+' ? 1 : 0);
    auto [p, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) return std::nullopt;
    return static_cast<double>(v);
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

Value parse_value(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.empty()) fail_line(line, "missing value");
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') fail_line(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s.front() == '[') {
    if (s.back() != ']') fail_line(line, "unterminated array");
    std::vector<double> items;
    std::stringstream body(s.substr(1, s.size() - 2));
    std::string item;
    while (std::getline(body, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      bool integral = false;
      const auto v = parse_number(item, integral);
      if (!v) fail_line(line, "arrays may only hold numbers, got '" + item + "'");
      items.push_back(*v);
    }
    return items;
  }
  bool integral = false;
  const auto v = parse_number(s, integral);
  if (!v) fail_line(line, "cannot parse value '" + s + "'");
  if (integral) return static_cast<long long>(*v);
  return *v;
}

// --- typed access --------------------------------------------------------

[[noreturn]] void type_error(const std::string& key, const char* want) {
  throw ConfigError("key '" + key + "' expects " + want);
}

long long as_int(const std::string& key, const Value& v) {
  if (const auto* i = std::get_if<long long>(&v)) return *i;
  type_error(key, "an integer");
}

int as_int32(const std::string& key, const Value& v) {
  const long long i = as_int(key, v);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw ConfigError("key '" + key + "' is out of range");
  }
  return static_cast<int>(i);
}

double as_double(const std::string& key, const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<long long>(&v)) return static_cast<double>(*i);
  type_error(key, "a number");
}

bool as_bool(const std::string& key, const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  type_error(key, "true or false");
}

const std::string& as_string(const std::string& key, const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  type_error(key, "a string");
}

std::vector<int> as_int_list(const std::string& key, const Value& v) {
  const auto* a = std::get_if<std::vector<double>>(&v);
  if (!a) type_error(key, "an array of integers");
  std::vector<int> out;
  for (double d : *a) {
    if (d != static_cast<int>(d)) type_error(key, "an array of integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

// --- key table -----------------------------------------------------------

struct Field {
  std::function<void(RunConfig&, const std::string&, const Value&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename Get>
Field int_field(Get get) {
  return {[get](RunConfig& c, const std::string& k, const Value& v) { get(c) = as_int32(k, v); },
          [get](const RunConfig& c) { return json(get(c)); }};
}

template <typename Get>
Field long_field(Get get) {
  return {[get](RunConfig& c, const std::string& k, const Value& v) { get(c) = as_int(k, v); },
          [get](const RunConfig& c) { return json(get(c)); }};
}

template <typename Get>
Field seed_field(Get get) {
  return {[get](RunConfig& c, const std::string& k, const Value& v) {
            const long long s = as_int(k, v);
            if (s < 0) throw ConfigError("key '" + k + "' must be >= 0");
            get(c) = static_cast<std::uint64_t>(s);
          },
          [get](const RunConfig& c) { return json(get(c)); }};
}

template <typename Get>
Field double_field(Get get) {
  return {[get](RunConfig& c, const std::string& k, const Value& v) { get(c) = as_double(k, v); },
          [get](const RunConfig& c) { return json(get(c)); }};
}

template <typename Get>
Field bool_field(Get get) {
  return {[get](RunConfig& c, const std::string& k, const Value& v) { get(c) = as_bool(k, v); },
          [get](const RunConfig& c) { return json(get(c)); }};
}

void add_fault(std::map<std::string, Field>& t, const std::string& prefix,
               transport::ChannelFault RunConfig::*member) {
  t[prefix + ".base_latency_ms"] = double_field([member](auto& c) -> auto& { return (c.*member).base_latency_ms; });
  t[prefix + ".jitter_ms"] = double_field([member](auto& c) -> auto& { return (c.*member).jitter_ms; });
  t[prefix + ".drop_prob"] = double_field([member](auto& c) -> auto& { return (c.*member).drop_prob; });
  t[prefix + ".seed"] = seed_field([member](auto& c) -> auto& { return (c.*member).seed; });
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    // env
    t["env.step_time_ms"] = int_field([](auto& c) -> auto& { return c.env.step_time_ms; });
    t["env.episode_steps"] = int_field([](auto& c) -> auto& { return c.env.episode_steps; });
    t["env.filter_c"] = double_field([](auto& c) -> auto& { return c.env.filter_c; });
    t["env.device_id"] = int_field([](auto& c) -> auto& { return c.env.device_id; });
    t["env.stale_limit_ms"] = int_field([](auto& c) -> auto& { return c.env.stale_limit_ms; });
    t["env.reset_wait_ms"] = int_field([](auto& c) -> auto& { return c.env.reset_wait_ms; });
    t["env.reset_timeout_ms"] = int_field([](auto& c) -> auto& { return c.env.reset_timeout_ms; });
    t["env.seed"] = seed_field([](auto& c) -> auto& { return c.env.seed; });
    t["env.mode"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          const auto& s = as_string(k, v);
          if (s == "discrete") c.env.mode = env::ActionMode::Discrete;
          else if (s == "continuous") c.env.mode = env::ActionMode::Continuous;
          else throw ConfigError("key '" + k + "' must be \"discrete\" or \"continuous\"");
        },
        [](const RunConfig& c) { return json(c.env.mode == env::ActionMode::Discrete ? "discrete" : "continuous"); }};
    t["env.delay"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          const auto& s = as_string(k, v);
          if (s == "none") c.env.delay = DelayModel::none();
          else if (s == "uniform") c.env.delay = DelayModel::paper_uniform();
          else throw ConfigError("key '" + k + "' must be \"none\" or \"uniform\"");
        },
        [](const RunConfig& c) { return json(c.env.delay.kind == DelayModel::Kind::None ? "none" : "uniform"); }};
    t["env.reset"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          const auto& s = as_string(k, v);
          if (s == "hold") c.env.reset_mode = env::ResetMode::Hold;
          else if (s == "randomized") c.env.reset_mode = env::ResetMode::Randomized;
          else throw ConfigError("key '" + k + "' must be \"hold\" or \"randomized\"");
        },
        [](const RunConfig& c) { return json(c.env.reset_mode == env::ResetMode::Hold ? "hold" : "randomized"); }};
    // features
    t["features.pend_velocity"] = bool_field([](auto& c) -> auto& { return c.env.features.pend_velocity; });
    t["features.pend_acceleration"] = bool_field([](auto& c) -> auto& { return c.env.features.pend_acceleration; });
    t["features.arm_velocity"] = bool_field([](auto& c) -> auto& { return c.env.features.arm_velocity; });
    t["features.time_since_last_action"] = bool_field([](auto& c) -> auto& { return c.env.features.time_since_last_action; });
    t["features.observation_age"] = bool_field([](auto& c) -> auto& { return c.env.features.observation_age; });
    // firmware
    t["firmware.obs_interval_ms"] = int_field([](auto& c) -> auto& { return c.firmware.obs_interval_ms; });
    t["firmware.act_interval_ms"] = int_field([](auto& c) -> auto& { return c.firmware.act_interval_ms; });
    t["firmware.encoder_offset"] = int_field([](auto& c) -> auto& { return c.firmware.encoder_offset; });
    t["firmware.safety_rps"] = double_field([](auto& c) -> auto& { return c.firmware.safety_rps; });
    t["firmware.discrete_increment"] = double_field([](auto& c) -> auto& { return c.firmware.discrete_increment; });
    t["firmware.servo_range_rad"] = double_field([](auto& c) -> auto& { return c.firmware.servo_range_rad; });
    // physics
    t["physics.length"] = double_field([](auto& c) -> auto& { return c.physics.length; });
    t["physics.arm_radius"] = double_field([](auto& c) -> auto& { return c.physics.arm_radius; });
    t["physics.gravity"] = double_field([](auto& c) -> auto& { return c.physics.gravity; });
    t["physics.damping"] = double_field([](auto& c) -> auto& { return c.physics.damping; });
    t["physics.phi_max"] = double_field([](auto& c) -> auto& { return c.physics.phi_max; });
    t["physics.servo_rate_max"] = double_field([](auto& c) -> auto& { return c.physics.servo_rate_max; });
    t["physics.servo_tau"] = double_field([](auto& c) -> auto& { return c.physics.servo_tau; });
    // channel faults
    add_fault(t, "fault.observations", &RunConfig::observation_fault);
    add_fault(t, "fault.actions", &RunConfig::action_fault);
    // training
    t["train.algo"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          try {
            c.train.algo = agents::parse_algo(as_string(k, v));
          } catch (const std::invalid_argument& e) {
            throw ConfigError("key '" + k + "': " + e.what());
          }
        },
        [](const RunConfig& c) { return json(agents::algo_name(c.train.algo)); }};
    t["train.scaling"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          const auto& s = as_string(k, v);
          if (s == "normalized") c.train.scaling = agents::FeatureScaling::Normalized;
          else if (s == "raw") c.train.scaling = agents::FeatureScaling::Raw;
          else throw ConfigError("key '" + k + "' must be \"normalized\" or \"raw\"");
        },
        [](const RunConfig& c) { return json(c.train.scaling == agents::FeatureScaling::Raw ? "raw" : "normalized"); }};
    t["train.episodes"] = int_field([](auto& c) -> auto& { return c.train.episodes; });
    t["train.seed"] = seed_field([](auto& c) -> auto& { return c.train.seed; });
    t["train.batch"] = int_field([](auto& c) -> auto& { return c.train.batch; });
    t["train.buffer_capacity"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          const long long n = as_int(k, v);
          if (n < 1) throw ConfigError("key '" + k + "' must be positive");
          c.train.buffer_capacity = static_cast<std::size_t>(n);
        },
        [](const RunConfig& c) { return json(c.train.buffer_capacity); }};
    t["train.warmup"] = int_field([](auto& c) -> auto& { return c.train.warmup; });
    t["train.gru_hidden"] = int_field([](auto& c) -> auto& { return c.train.gru_hidden; });
    t["train.train_gru"] = bool_field([](auto& c) -> auto& { return c.train.train_gru; });
    t["train.gru_window"] = int_field([](auto& c) -> auto& { return c.train.gru_window; });
    t["train.gru_lr"] = double_field([](auto& c) -> auto& { return c.train.gru_lr; });
    t["train.updates_per_step"] = int_field([](auto& c) -> auto& { return c.train.updates_per_step; });
    t["train.async"] = bool_field([](auto& c) -> auto& { return c.train.async; });
    t["train.snapshot_period"] = int_field([](auto& c) -> auto& { return c.train.snapshot_period; });
    t["train.plateau_window"] = int_field([](auto& c) -> auto& { return c.train.plateau_window; });
    t["train.plateau_patience"] = int_field([](auto& c) -> auto& { return c.train.plateau_patience; });
    // dqn
    t["dqn.gamma"] = double_field([](auto& c) -> auto& { return c.train.dqn.gamma; });
    t["dqn.lr"] = double_field([](auto& c) -> auto& { return c.train.dqn.lr; });
    t["dqn.hidden"] = {
        [](RunConfig& c, const std::string& k, const Value& v) { c.train.dqn.hidden = as_int_list(k, v); },
        [](const RunConfig& c) { return json(c.train.dqn.hidden); }};
    t["dqn.huber_delta"] = double_field([](auto& c) -> auto& { return c.train.dqn.huber_delta; });
    t["dqn.target_sync_period"] = int_field([](auto& c) -> auto& { return c.train.dqn.target_sync_period; });
    t["dqn.tau"] = double_field([](auto& c) -> auto& { return c.train.dqn.tau; });
    t["dqn.eps_start"] = double_field([](auto& c) -> auto& { return c.train.dqn.eps_start; });
    t["dqn.eps_end"] = double_field([](auto& c) -> auto& { return c.train.dqn.eps_end; });
    t["dqn.eps_decay_steps"] = long_field([](auto& c) -> auto& { return c.train.dqn.eps_decay_steps; });
    t["dqn.grad_clip"] = double_field([](auto& c) -> auto& { return c.train.dqn.grad_clip; });
    // td3
    t["td3.gamma"] = double_field([](auto& c) -> auto& { return c.train.td3.gamma; });
    t["td3.actor_lr"] = double_field([](auto& c) -> auto& { return c.train.td3.actor_lr; });
    t["td3.critic_lr"] = double_field([](auto& c) -> auto& { return c.train.td3.critic_lr; });
    t["td3.hidden"] = {
        [](RunConfig& c, const std::string& k, const Value& v) { c.train.td3.hidden = as_int_list(k, v); },
        [](const RunConfig& c) { return json(c.train.td3.hidden); }};
    t["td3.tau"] = double_field([](auto& c) -> auto& { return c.train.td3.tau; });
    t["td3.policy_delay"] = int_field([](auto& c) -> auto& { return c.train.td3.policy_delay; });
    t["td3.target_noise"] = double_field([](auto& c) -> auto& { return c.train.td3.target_noise; });
    t["td3.noise_clip"] = double_field([](auto& c) -> auto& { return c.train.td3.noise_clip; });
    t["td3.explore_noise"] = double_field([](auto& c) -> auto& { return c.train.td3.explore_noise; });
    // rig
    t["rig.devices"] = int_field([](auto& c) -> auto& { return c.devices; });
    t["rig.port"] = int_field([](auto& c) -> auto& { return c.port; });
    t["rig.clock"] = {
        [](RunConfig& c, const std::string& k, const Value& v) {
          c.clock = as_string(k, v);
          try {
            clock_factor(c.clock);
          } catch (const ConfigError& e) {
            throw ConfigError("key '" + k + "': " + e.what());
          }
        },
        [](const RunConfig& c) { return json(c.clock); }};
    return t;
  }();
  return table;
}

template <typename F>
void checked(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::map<std::string, Value> parse_toml(const std::string& text) {
  std::map<std::string, Value> out;
  std::istringstream in(text);
  std::string raw;
  std::string table;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_line(line, "unterminated table header");
      table = trim(s.substr(1, s.size() - 2));
      if (!bare_name(table)) fail_line(line, "bad table name '" + table + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail_line(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!bare_name(key)) fail_line(line, "bad key '" + key + "'");
    const std::string full = table.empty() ? key : table + "." + key;
    if (out.count(full)) fail_line(line, "duplicate key '" + full + "'");
    out[full] = parse_value(s.substr(eq + 1), line);
  }
  return out;
}

void RunConfig::validate() const {
  checked([&] {
    env.validate();
    firmware.validate();
    physics.validate();
    observation_fault.validate();
    action_fault.validate();
    train.validate();
  });
  if (devices < 1) throw ConfigError("rig.devices must be >= 1");
  if (port < 0 || port > 65535) throw ConfigError("rig.port must be in [0, 65535]");
  if (env.device_id < 0) throw ConfigError("env.device_id must be >= 0");
  if (agents::action_mode(train.algo) != env.mode) {
    throw ConfigError("train.algo " + agents::algo_name(train.algo) + " does not match env.mode");
  }
}

RunConfig apply(RunConfig base, const std::map<std::string, Value>& values) {
  const auto& table = fields();
  for (const auto& [key, value] : values) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
    it->second.set(base, key, value);
  }
  base.firmware.mode = base.env.mode;
  return base;
}

RunConfig load_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return config::apply(std::move(base), parse_toml(buf.str()));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

double clock_factor(const std::string& spec) {
  if (spec == "real") return 1.0;
  const std::string prefix = "accel:";
  if (spec.rfind(prefix, 0) == 0) {
    bool integral = false;
    const auto v = parse_number(spec.substr(prefix.size()), integral);
    if (v && *v > 0.0) return *v;
  }
  throw ConfigError("clock must be \"real\" or \"accel:N\" with N > 0, got '" + spec + "'");
}

json to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& [key, field] : fields()) {
    const auto dot = key.rfind('.');
    out[key.substr(0, dot)][key.substr(dot + 1)] = field.get(cfg);
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pendulum::config
