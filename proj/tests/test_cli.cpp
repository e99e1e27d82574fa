#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pendulum/clock.hpp"
#include "pendulum/config.hpp"
#include "pendulum/transport/frame.hpp"
#include "pendulum/transport/tcp.hpp"

#ifndef PENDULUM_CLI
#error "PENDULUM_CLI must name the pendulum executable"
#endif

using namespace pendulum;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PENDULUM_CLI) + " " + args + " 2>&1";
  RunResult r;
  std::FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pendulum_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

constexpr const char* kSmallConfig = R"(# tiny run for smoke tests
[env]
episode_steps = 30
reset_wait_ms = 112

[train]
batch = 16
warmup = 20
buffer_capacity = 1000
gru_hidden = 4

[dqn]
hidden = [16, 16]

[td3]
hidden = [16, 16]
)";

fs::path write_config(const TempDir& dir, const std::string& name, const std::string& text) {
  const auto p = dir.path / name;
  std::ofstream(p) << text;
  return p;
}

fs::path only_run_dir(const fs::path& out) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(out)) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  return dirs.front();
}

}  // namespace

TEST_CASE("settings file parsing") {
  const auto values = config::parse_toml(R"(
top = 1
[env]
step_time_ms = 60   # trailing comment
mode = "continuous"
filter_c = 0.5
[dqn]
hidden = [64, 32]
[a.b]
flag = true
)");
  CHECK(std::get<long long>(values.at("top")) == 1);
  CHECK(std::get<long long>(values.at("env.step_time_ms")) == 60);
  CHECK(std::get<std::string>(values.at("env.mode")) == "continuous");
  CHECK(std::get<double>(values.at("env.filter_c")) == 0.5);
  CHECK(std::get<std::vector<double>>(values.at("dqn.hidden")) == std::vector<double>{64, 32});
  CHECK(std::get<bool>(values.at("a.b.flag")));

  CHECK_THROWS_AS(config::parse_toml("[env\nx = 1"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_toml("x = "), config::ConfigError);
  CHECK_THROWS_AS(config::parse_toml("x = 1\nx = 2"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_toml("x = \"open"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_toml("just words"), config::ConfigError);
}

TEST_CASE("settings map onto run configuration") {
  auto cfg = config::apply({}, config::parse_toml(R"(
[env]
step_time_ms = 60
mode = "continuous"
delay = "uniform"
reset = "randomized"
[features]
observation_age = false
[firmware]
obs_interval_ms = 15
[fault.observations]
base_latency_ms = 50
[train]
algo = "rtd3"
[dqn]
hidden = [64, 32]
)"));
  CHECK(cfg.env.step_time_ms == 60);
  CHECK(cfg.env.mode == env::ActionMode::Continuous);
  CHECK(cfg.firmware.mode == env::ActionMode::Continuous);
  CHECK(cfg.env.delay.kind == DelayModel::Kind::PaperUniform);
  CHECK(cfg.env.reset_mode == env::ResetMode::Randomized);
  CHECK_FALSE(cfg.env.features.observation_age);
  CHECK(cfg.firmware.obs_interval_ms == 15);
  CHECK(cfg.observation_fault.base_latency_ms == 50.0);
  CHECK(cfg.train.algo == agents::Algo::RTd3);
  CHECK(cfg.train.dqn.hidden == std::vector<int>{64, 32});
  CHECK_NOTHROW(cfg.validate());

  const auto j = config::to_json(cfg);
  CHECK(j["env"]["step_time_ms"] == 60);
  CHECK(j["fault.observations"]["base_latency_ms"] == 50.0);
  CHECK(config::config_hash(cfg) == config::config_hash(cfg));
  CHECK(config::config_hash(cfg) != config::config_hash(config::RunConfig{}));
  CHECK(config::config_hash(cfg).size() == 16);

  CHECK_THROWS_WITH_AS(config::apply({}, config::parse_toml("[env]\nstep_tme_ms = 3")),
                       "unknown key 'env.step_tme_ms'", config::ConfigError);
  CHECK_THROWS_AS(config::apply({}, config::parse_toml("[env]\nstep_time_ms = 1.5")), config::ConfigError);
  CHECK_THROWS_AS(config::apply({}, config::parse_toml("[env]\nmode = \"analog\"")), config::ConfigError);
  CHECK_THROWS_AS(config::apply({}, config::parse_toml("[train]\nseed = -1")), config::ConfigError);

  auto mismatched = config::apply({}, config::parse_toml("[train]\nalgo = \"td3\""));
  CHECK_THROWS_AS(mismatched.validate(), config::ConfigError);
  auto invalid = config::apply({}, config::parse_toml("[env]\nfilter_c = 2.0"));
  CHECK_THROWS_AS(invalid.validate(), config::ConfigError);
}

TEST_CASE("clock specs") {
  CHECK(config::clock_factor("real") == 1.0);
  CHECK(config::clock_factor("accel:50") == 50.0);
  CHECK(config::clock_factor("accel:2.5") == 2.5);
  CHECK_THROWS_AS(config::clock_factor("accel:0"), config::ConfigError);
  CHECK_THROWS_AS(config::clock_factor("fast"), config::ConfigError);
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir;
  CHECK(run("").code == 2);
  CHECK(run("fly").code == 2);
  CHECK(run("train --config /no/such/file.toml").code == 2);
  CHECK(run("train --algo ppo --episodes 1").code == 2);
  CHECK(run("train --env moon --episodes 1").code == 2);

  const auto bad = write_config(dir, "bad.toml", "[rig]\ndevices = 2\nwibble = 1\n");
  const auto r = run("rig --config " + bad.string());
  CHECK(r.code == 2);
  CHECK(r.output.find("rig.wibble") != std::string::npos);

  const auto missing = run("eval --policy " + (dir.path / "missing.json").string());
  CHECK(missing.code == 2);
  CHECK(missing.output.find("missing.json") != std::string::npos);
  CHECK(run("rig --clock warp:3 --duration 0.1").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("train writes curve, manifest and policy") {
  TempDir dir;
  const auto cfg = write_config(dir, "small.toml", kSmallConfig);
  const auto out = dir.path / "runs";
  const auto r = run("train --quiet --algo dqn --env sim --episodes 3 --seed 7 --config " + cfg.string() +
                     " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto run_dir = only_run_dir(out);

  std::istringstream csv(read_file(run_dir / "curve.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "episode,return,steps,wall_ms");
  int rows = 0;
  while (std::getline(csv, line)) {
    CHECK(std::regex_match(line, std::regex(R"(\d+,-?[0-9.]+,30,[0-9.]+)")));
    ++rows;
  }
  CHECK(rows == 3);

  const auto m = nlohmann::json::parse(read_file(run_dir / "manifest.json"));
  CHECK(m["seed"] == 7);
  CHECK(m["algorithm"] == "dqn");
  CHECK(m["env"] == "sim");
  CHECK(m["status"] == "ok");
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m.contains("git_revision"));
  CHECK(m.contains("started"));
  CHECK(m.contains("finished"));
  CHECK(m["config"]["env"]["episode_steps"] == 30);
  CHECK(fs::exists(run_dir / "policy.json"));

  SUBCASE("eval reports swing-up timing") {
    const auto json_out = dir.path / "eval.json";
    const auto e = run("eval --episodes 2 --policy " + (run_dir / "policy.json").string() + " --config " +
                       cfg.string() + " --json " + json_out.string());
    REQUIRE(e.code == 0);
    CHECK(e.output.find("mean return") != std::string::npos);
    CHECK(e.output.find("upright fraction") != std::string::npos);
    const auto j = nlohmann::json::parse(read_file(json_out));
    CHECK(j["episodes"] == 2);
    CHECK(j["per_episode"].size() == 2);
    CHECK(j.contains("mean_time_to_upright_s"));
  }
}

TEST_CASE("train on the delayed sim records the delay model") {
  TempDir dir;
  const auto cfg = write_config(dir, "small.toml", kSmallConfig);
  const auto out = dir.path / "runs";
  const auto r = run("train --quiet --algo rdqn --env sim-delayed --episodes 2 --config " + cfg.string() +
                     " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto m = nlohmann::json::parse(read_file(only_run_dir(out) / "manifest.json"));
  CHECK(m["delay_model"] == DelayModel::paper_uniform().name());
  CHECK(m["config"]["env"]["delay"] == "uniform");
  CHECK(read_file(only_run_dir(out) / "curve.csv").rfind("episode,return,steps,wall_ms\n", 0) == 0);
}

TEST_CASE("random policy baseline is far from solved") {
  const auto r = run("eval --policy random --episodes 3");
  REQUIRE(r.code == 0);
  std::smatch m;
  REQUIRE(std::regex_search(r.output, m, std::regex(R"(mean return (-?[0-9.]+))")));
  CHECK(std::stod(m[1]) / 500.0 < -1.0);
}

TEST_CASE("bench histogram and latency shift") {
  TempDir dir;
  const auto base = run("bench --steps 200 --out " + (dir.path / "b0.csv").string());
  REQUIRE(base.code == 0);
  const auto slow = run("bench --steps 200 --latency-ms 50 --out " + (dir.path / "b50.csv").string());
  REQUIRE(slow.code == 0);
  CHECK(read_file(dir.path / "b0.csv").rfind("metric,bin_start_ms,bin_end_ms,count\n", 0) == 0);

  auto median = [](const std::string& out, const std::string& metric) {
    std::smatch m;
    REQUIRE(std::regex_search(out, m, std::regex(metric + R"(\s+median\s+(-?[0-9.]+))")));
    return std::stod(m[1]);
  };
  CHECK(median(base.output, "observation_age") < 14.0);
  const double shift = median(slow.output, "end_to_end_age") - median(base.output, "end_to_end_age");
  CHECK(shift == doctest::Approx(50.0).epsilon(0.15));
}

TEST_CASE("rig service with two devices and training over the socket") {
  // Launch the rig on a free port and read the port from its first line.
  const std::string cmd = std::string(PENDULUM_CLI) + " rig --devices 2 --port 0 --clock accel:10 --duration 6 2>&1";
  std::FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[512];
  int port = 0;
  std::string banner;
  for (int i = 0; i < 4 && std::fgets(buf, sizeof buf, p); ++i) {
    banner += buf;
    std::sscanf(buf, "broker listening on port %d", &port);
  }
  REQUIRE(port > 0);
  CHECK(banner.find("pendulum/1/observations") != std::string::npos);

  ScaledClock clock(10.0);
  transport::TcpSession listener("127.0.0.1", port, "listener", [&] { return clock.now(); });
  listener.subscribe(transport::observations_topic(0));
  listener.subscribe(transport::observations_topic(1));
  std::set<std::string> seen;
  const auto t0 = std::chrono::steady_clock::now();
  while (seen.size() < 2 && std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3)) {
    for (const auto& m : listener.poll()) seen.insert(m.topic);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(seen.size() == 2);
  listener.close();

  TempDir dir;
  const auto cfg = write_config(dir, "small.toml", kSmallConfig);
  const auto r = run("train --quiet --algo dqn --env wire --clock accel:10 --episodes 2 --broker 127.0.0.1:" +
                     std::to_string(port) + " --config " + cfg.string() + " --out " + (dir.path / "runs").string());
  CHECK(r.code == 0);
  const auto m = nlohmann::json::parse(read_file(only_run_dir(dir.path / "runs") / "manifest.json"));
  CHECK(m["env"] == "wire");
  CHECK(m["status"] == "ok");
  CHECK(m["episodes"] == 2);

  std::string rest;
  while (std::fgets(buf, sizeof buf, p)) rest += buf;
  const int status = pclose(p);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(rest.find("device 1:") != std::string::npos);
}

TEST_CASE("wire training against a dead broker fails with status") {
  TempDir dir;
  const auto cfg = write_config(dir, "small.toml", kSmallConfig);
  // Port 1 on loopback is closed.
  const auto r = run("train --quiet --env wire --broker 127.0.0.1:1 --episodes 1 --config " + cfg.string() +
                     " --out " + (dir.path / "runs").string());
  CHECK(r.code == 1);
  const auto m = nlohmann::json::parse(read_file(only_run_dir(dir.path / "runs") / "manifest.json"));
  CHECK(m["status"] == "connection_lost");
}
