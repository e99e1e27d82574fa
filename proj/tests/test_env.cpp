#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "pendulum/env.hpp"
#include "pendulum/transport/tcp.hpp"
#include "pendulum/twin.hpp"
#include "support/twin_trace.hpp"

using namespace pendulum;
using namespace pendulum::env;

namespace {

constexpr double kPi = std::numbers::pi;

// Speed when all of `energy` is kinetic.
double max_speed_rps(double energy, const PhysicsParams& p) {
  return std::sqrt(2.0 * energy) / p.length / (2.0 * kPi);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

}  // namespace

TEST_CASE("reward values") {
  CHECK(reward(0.0, 0.0) == 0.0);
  CHECK(reward(kPi, 0.0) == doctest::Approx(-9.8696).epsilon(1e-5));
  CHECK(reward(kPi / 2, 1.0) == doctest::Approx(-2.9674).epsilon(1e-4));
  CHECK(reward(theta_up_from_bottom(0.0), 0.0) == doctest::Approx(-kPi * kPi));
  CHECK(reward(theta_up_from_bottom(kPi), 0.0) == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> a(-50.0, 50.0), w(-5.0, 5.0);
  for (int i = 0; i < 10000; ++i) {
    const double r = reward(theta_up_from_bottom(a(rng)), w(rng));
    REQUIRE(r <= 0.0);
    REQUIRE(r < 0.0);
  }
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  CHECK(wrap_angle(-3 * kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(wrap_angle(20 * kPi + 0.1) == doctest::Approx(0.1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = a(rng), y = wrap_angle(x);
    REQUIRE(y >= -kPi);
    REQUIRE(y <= kPi);
    REQUIRE(std::abs(std::remainder(x - y, 2 * kPi)) < 1e-9);
  }
}

TEST_CASE("action filter") {
  ActionFilter f;
  CHECK(f.apply(1.0) == doctest::Approx(0.15));
  f.reset();
  for (int i = 0; i < 10; ++i) f.apply(1.0);
  CHECK(f.a_bar == doctest::Approx(0.80313).epsilon(1e-5));
  CHECK(f.a_bar == doctest::Approx(1.0 - std::pow(0.85, 10)));

  ActionFilter g{0.37, 0.85};
  CHECK(g.apply(0.37) == doctest::Approx(0.37));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionFilter h;
  for (int i = 0; i < 5000; ++i) {
    const double x = u(rng), before = h.a_bar;
    const double y = h.apply(x);
    REQUIRE(std::abs(y) <= 1.0);
    REQUIRE(std::abs(y - x) == doctest::Approx(0.85 * std::abs(before - x)));
  }
}

TEST_CASE("parse_observation") {
  const auto up = parse_observation("1500,512,0.000000,0.000000,0.000000,0.000000", 1.0, 1.0, 1.0);
  REQUIRE(up);
  CHECK(up->encoder_count == 512);
  CHECK(up->theta() == doctest::Approx(kPi));
  CHECK(reward(theta_up_from_bottom(up->theta()), up->pend_velocity) == 0.0);

  CHECK_FALSE(parse_observation("x,y", 0, 0, 0));

  const auto aged = parse_observation("0,0,0.1,0.2,0.3,0.4", 10.000, 10.020, 9.9);
  REQUIRE(aged);
  CHECK(aged->observation_age == doctest::Approx(0.020));
  CHECK(aged->time_since_last_action == doctest::Approx(0.120));
  CHECK(aged->servo_position == doctest::Approx(0.1));
  CHECK(aged->arm_velocity == doctest::Approx(0.4));
}

TEST_CASE("feature flags select values") {
  ObservationVector o;
  o.encoder_count = 3;
  o.servo_position = 0.5;
  o.pend_velocity = 1;
  o.pend_acceleration = 2;
  o.arm_velocity = 3;
  o.time_since_last_action = 4;
  o.observation_age = 5;
  FeatureFlags all;
  CHECK(all.count() == 7);
  CHECK(o.values(all) == std::vector<double>{3, 0.5, 1, 2, 3, 4, 5});
  FeatureFlags some;
  some.pend_acceleration = false;
  some.observation_age = false;
  CHECK(some.count() == 5);
  CHECK(o.values(some) == std::vector<double>{3, 0.5, 1, 3, 4});
}

TEST_CASE("sim step timing and episode accounting") {
  EnvSettings s;
  s.reset_mode = ResetMode::Randomized;
  PendulumSim sim(s);
  CHECK_THROWS_AS(sim.step(DiscreteAction{0}), std::logic_error);
  sim.reset();
  const double t0 = sim.state().time();
  const auto first = sim.step(DiscreteAction{3});
  CHECK(sim.state().time() - t0 == doctest::Approx(0.060).epsilon(1e-12));
  CHECK(first.info.step_duration == doctest::Approx(0.060));

  int done_count = 0;
  double total = first.reward;
  for (int i = 1; i < 500; ++i) {
    const auto r = sim.step(DiscreteAction{i % 5});
    total += r.reward;
    if (r.done) {
      ++done_count;
      CHECK(i == 499);
    }
  }
  CHECK(done_count == 1);
  CHECK(sim.steps() == 500);
  CHECK(total < 0.0);
  CHECK_THROWS_AS(sim.step(DiscreteAction{0}), std::logic_error);
}

TEST_CASE("sim reset contract") {
  EnvSettings s;
  s.mode = ActionMode::Continuous;
  PendulumSim sim(s);
  sim.reset();
  sim.step(ContinuousAction{1.0});
  CHECK(sim.filter().a_bar == doctest::Approx(0.15));
  CHECK(sim.servo_command() == doctest::Approx(0.15));
  sim.step(ContinuousAction{1.0});
  CHECK(sim.steps() == 2);
  sim.reset();
  CHECK(sim.steps() == 0);
  CHECK(sim.filter().a_bar == 0.0);
}

TEST_CASE("sim rejects actions of the wrong kind") {
  PendulumSim d(EnvSettings{});
  d.reset();
  CHECK_THROWS_AS(d.step(ContinuousAction{0.1}), std::invalid_argument);
  CHECK_THROWS_AS(d.step(DiscreteAction{5}), std::invalid_argument);
  EnvSettings cs;
  cs.mode = ActionMode::Continuous;
  PendulumSim c(cs);
  c.reset();
  CHECK_THROWS_AS(c.step(DiscreteAction{1}), std::invalid_argument);
  CHECK_THROWS_AS(c.step(ContinuousAction{std::nan("")}), std::invalid_argument);
}

TEST_CASE("randomized reset is reproducible") {
  EnvSettings s;
  s.reset_mode = ResetMode::Randomized;
  s.seed = 17;
  PendulumSim a(s), b(s);
  for (int ep = 0; ep < 5; ++ep) {
    const auto oa = a.reset();
    const auto ob = b.reset();
    CHECK(oa.encoder_count == ob.encoder_count);
    CHECK(oa.pend_velocity == ob.pend_velocity);
    CHECK(std::abs(a.state().theta_dot) <= 1.0);
    a.step(DiscreteAction{3});
    b.step(DiscreteAction{3});
  }
}

TEST_CASE("stopped resets let the swing decay") {
  PendulumState init;
  init.theta = 2.0;
  init.theta_dot = 3.0;
  const PhysicsParams p;
  PendulumSim sim(EnvSettings{}, p, firmware::FirmwareConfig{}, init);
  sim.reset();
  const double e1 = total_energy(sim.state(), p);
  const double second = std::abs(sim.reset().pend_velocity);
  const double e2 = total_energy(sim.state(), p);
  CHECK(e1 < total_energy(init, p));
  CHECK(e2 < e1);
  // The speed at any phase is bounded by the energy left after the first reset.
  CHECK(second <= max_speed_rps(e1, p));
}

TEST_CASE("delayed sim observes mid-step") {
  EnvSettings s;
  s.delay = DelayModel::paper_uniform();
  s.reset_mode = ResetMode::Randomized;
  PendulumSim sim(s);
  sim.reset();
  int seen[3] = {0, 0, 0};
  for (int i = 0; i < 300; ++i) {
    const double before = sim.state().time();
    const auto r = sim.step(DiscreteAction{i % 5});
    ++seen[r.info.extra_frames];
    CHECK(sim.state().time() - before ==
          doctest::Approx((6 + r.info.extra_frames) * 0.005).epsilon(1e-12));
    CHECK(r.observation.observation_age == doctest::Approx(r.info.extra_frames * 0.005));
  }
  for (int c : seen) CHECK(c > 50);
  CHECK(sim.name() == "sim-delayed");
}

TEST_CASE("sim safety overrides spin") {
  PendulumState init;
  init.theta_dot = 3.5 * 2 * kPi;
  EnvSettings s;
  s.reset_wait_ms = 60;
  PendulumSim sim(s, PhysicsParams{}, firmware::FirmwareConfig{}, init);
  sim.reset();
  const auto r = sim.step(DiscreteAction{4});
  CHECK(r.info.safety_triggered);
  CHECK(sim.servo_command() == 0.0);
}

// ---------------------------------------------------------------------------

TEST_CASE("wire env over a loopback twin") {
  LoopbackTwin twin;
  auto session = twin.connect("env");
  EnvSettings s;
  s.episode_steps = 50;
  PendulumWire wire(s, *session, twin.clock());

  const double t0 = twin.clock().now();
  const auto first = wire.reset();
  CHECK(wire.steps() == 0);
  CHECK(twin.clock().now() - t0 >= 2.0);
  CHECK(first.observation_age >= 0.0);
  CHECK(wire.last_action_payload() == "m0");

  SUBCASE("actions reach the rig as wire text") {
    wire.step(DiscreteAction{3});
    CHECK(wire.last_action_payload() == "m3");
    wire.step(DiscreteAction{3});
    CHECK(twin.rig().firmware().state().servo_command > 0.0);
    CHECK(twin.rig().firmware().stats().commands_received >= 3);
  }

  SUBCASE("step waits the step time and never blocks the stream") {
    std::uint64_t prev = wire.received_messages();
    for (int i = 0; i < 20; ++i) {
      const double before = twin.clock().now();
      const auto r = wire.step(DiscreteAction{i % 5});
      CHECK(twin.clock().now() - before == doctest::Approx(0.056));
      const auto got = wire.received_messages() - prev;
      prev = wire.received_messages();
      CHECK(got >= 3);
      CHECK(got <= 5);
      CHECK(r.reward <= 0.0);
      CHECK(r.observation.observation_age >= 0.0);
      CHECK(r.observation.observation_age < 0.014);
      CHECK(r.observation.time_since_last_action == doctest::Approx(0.056));
    }
  }

  SUBCASE("done exactly at the episode length") {
    int dones = 0;
    for (int i = 0; i < 50; ++i) dones += wire.step(DiscreteAction{0}).done;
    CHECK(dones == 1);
    CHECK_THROWS_AS(wire.step(DiscreteAction{0}), std::logic_error);
    wire.reset();
    CHECK(wire.steps() == 0);
  }

  SUBCASE("malformed observations are skipped and counted") {
    auto noise = twin.connect("noise");
    noise->publish(transport::observations_topic(0), "x,y");
    noise->publish(transport::observations_topic(0), "");
    const auto r = wire.step(DiscreteAction{0});
    CHECK(wire.skipped_messages() == 2);
    CHECK(r.info.skipped_messages == 2);
  }

  SUBCASE("stale stream raises connection lost") {
    twin.broker().inject_fault(LoopbackTwin::rig_client_id(0), transport::Direction::Uplink,
                               {0.0, 0.0, 0.999999, 1});
    bool lost = false;
    for (int i = 0; i < 20 && !lost; ++i) {
      try {
        wire.step(DiscreteAction{0});
      } catch (const ConnectionLost&) {
        lost = true;
      }
    }
    CHECK(lost);
  }
}

TEST_CASE("wire reset times out without a rig") {
  VirtualClock clock;
  transport::LoopbackBroker broker([&] { return clock.now(); });
  auto session = broker.connect("env");
  PendulumWire wire(EnvSettings{}, *session, clock);
  CHECK_THROWS_AS(wire.reset(), ConnectionLost);
  CHECK(clock.now() >= 5.0);
}

TEST_CASE("continuous wire actions pass through the filter") {
  TwinOptions opts;
  opts.firmware.mode = ActionMode::Continuous;
  LoopbackTwin twin(opts);
  auto session = twin.connect("env");
  EnvSettings s;
  s.mode = ActionMode::Continuous;
  PendulumWire wire(s, *session, twin.clock());
  wire.reset();
  wire.step(ContinuousAction{1.0});
  CHECK(wire.last_action_payload() == "b0.150000");
  wire.step(ContinuousAction{1.0});
  CHECK(wire.last_action_payload() == "b0.277500");
  wire.reset();
  wire.step(ContinuousAction{-1.0});
  CHECK(wire.last_action_payload() == "b-0.150000");
}

TEST_CASE("consecutive wire resets with no actions lose energy") {
  TwinOptions opts;
  opts.initial.theta = 2.5;
  LoopbackTwin twin(opts);
  auto session = twin.connect("env");
  PendulumWire wire(EnvSettings{}, *session, twin.clock());
  const double e0 = total_energy(twin.rig().state(), twin.rig().params());
  wire.reset();
  const double e1 = total_energy(twin.rig().state(), twin.rig().params());
  const double v2 = std::abs(wire.reset().pend_velocity);
  const double e2 = total_energy(twin.rig().state(), twin.rig().params());
  CHECK(e1 < e0);
  CHECK(e2 < e1);
  // Smoothed encoder estimate: allow one count per poll interval of slack.
  CHECK(v2 <= max_speed_rps(e1, twin.rig().params()) + 1.0 / 1024 / 0.014);
}

TEST_CASE("injected uplink latency shows in the age telemetry") {
  TwinOptions opts;
  opts.observation_fault.base_latency_ms = 50.0;
  LoopbackTwin twin(opts);
  auto session = twin.connect("env");
  PendulumWire wire(EnvSettings{}, *session, twin.clock());
  wire.reset();
  std::vector<double> age, e2e;
  for (int i = 0; i < 200; ++i) {
    const auto r = wire.step(DiscreteAction{i % 5});
    age.push_back(r.observation.observation_age);
    e2e.push_back(r.info.end_to_end_age);
  }
  CHECK(mean(e2e) == doctest::Approx(0.057).epsilon(0.005 / 0.057));
  CHECK(mean(age) < 0.014);
  CHECK(mean(e2e) - mean(age) == doctest::Approx(0.050).epsilon(0.005 / 0.050));
}

TEST_CASE("wire env matches the direct sim") {
  const auto trace = testing::run_twin(testing::pumping_script(500, 5));
  const double diff = trace.mean_abs_encoder_diff();
  CAPTURE(diff);
  CHECK(diff < 2.0);
  // The trajectory must actually move for the comparison to mean anything.
  int lo = 1024, hi = -1;
  for (int e : trace.sim_encoder) {
    const int centered = (e + 512) % 1024;
    lo = std::min(lo, centered);
    hi = std::max(hi, centered);
  }
  CHECK(hi - lo > 100);
}

TEST_CASE("wire env over tcp") {
  transport::TcpBroker broker(0);
  broker.start();
  ScaledClock clock(1.0);
  const auto now = [&clock] { return clock.now(); };
  const int port = broker.port();
  VirtualRig rig(0, PhysicsParams{}, firmware::FirmwareConfig{}, [&] {
    return std::make_unique<transport::TcpSession>("127.0.0.1", port, "rig-0", now);
  });
  std::atomic<bool> stop{false};
  std::thread rig_thread([&] { rig.run(clock, stop); });

  transport::TcpSession session("127.0.0.1", port, "env", now);
  EnvSettings s;
  s.episode_steps = 20;
  s.reset_wait_ms = 300;
  PendulumWire wire(s, session, clock);
  wire.reset();
  int dones = 0;
  for (int i = 0; i < 20; ++i) {
    const auto r = wire.step(DiscreteAction{i % 2 ? 3 : 1});
    dones += r.done;
    CHECK(r.reward <= 0.0);
    CHECK(r.observation.observation_age >= 0.0);
  }
  CHECK(dones == 1);
  CHECK(wire.received_messages() > 20);
  CHECK(rig.firmware().stats().commands_received >= 21);
  stop = true;
  rig_thread.join();
}
