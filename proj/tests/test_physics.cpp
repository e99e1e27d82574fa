#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "pendulum/physics.hpp"

using namespace pendulum;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent oracle: explicit Euler with many substeps on the frozen-arm ODE.
double euler_theta_dot(double theta, double theta_dot, const PhysicsParams& p, double horizon,
                       int substeps) {
  const double h = horizon / substeps;
  for (int i = 0; i < substeps; ++i) {
    const double acc = -(p.gravity / p.length) * std::sin(theta) - p.damping * theta_dot;
    theta += h * theta_dot;
    theta_dot += h * acc;
  }
  return theta_dot;
}

PhysicsParams undamped() {
  PhysicsParams p;
  p.damping = 0.0;
  return p;
}

}  // namespace

TEST_CASE("hanging at rest is a fixed point") {
  PendulumState s;
  const PhysicsParams p;
  s = step_frames(s, 0.0, p, 400);
  CHECK(s.theta == 0.0);
  CHECK(s.theta_dot == 0.0);
  CHECK(s.phi == 0.0);
}

TEST_CASE("upright at rest stays upright for one frame") {
  PendulumState s;
  s.theta = kPi;
  const auto next = step_frame(s, 0.0, undamped());
  CHECK(std::abs(next.theta - kPi) < 1e-9);
}

TEST_CASE("horizontal release matches small-step oracle") {
  PendulumState s;
  s.theta = kPi / 2;
  const auto p = undamped();
  const auto next = step_frame(s, 0.0, p);
  const double oracle = euler_theta_dot(kPi / 2, 0.0, p, PhysicsParams::frame_dt, 100000);
  CHECK(next.theta_dot == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(std::abs(next.theta_dot - (-0.12908)) < 1e-4);
}

TEST_CASE("step_frames timing and composition") {
  PendulumState s;
  s.theta = 1.0;
  s.theta_dot = -0.3;
  const PhysicsParams p;

  const auto twelve = step_frames(s, 0.4, p, 12);
  CHECK(twelve.frame == 12);
  CHECK(std::abs(twelve.time() - 0.060) < 1e-12);

  CHECK(step_frames(s, 0.4, p, 1) == step_frame(s, 0.4, p));
  CHECK(step_frames(step_frames(s, 0.4, p, 6), 0.4, p, 6) == twelve);
  CHECK(step_frames(step_frames(s, 0.4, p, 5), 0.4, p, 7) == twelve);

  CHECK_THROWS_AS(step_frames(s, 0.0, p, 0), std::invalid_argument);
}

TEST_CASE("non-finite input is rejected") {
  PendulumState s;
  s.theta_dot = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step_frame(s, 0.0, PhysicsParams{}), InvalidState);
  CHECK_THROWS_AS(step_frame(PendulumState{}, std::numeric_limits<double>::infinity(),
                             PhysicsParams{}),
                  InvalidState);
}

TEST_CASE("total energy reference values") {
  PhysicsParams p;
  PendulumState s;
  CHECK(total_energy(s, p) == 0.0);
  s.theta = kPi;
  CHECK(total_energy(s, p) == doctest::Approx(2.0 * 9.81 * 0.38));
  CHECK(total_energy(s, p) == doctest::Approx(7.4556).epsilon(1e-5));
}

TEST_CASE("energy is conserved without damping over 10 s") {
  const auto p = undamped();
  for (double theta0 : {0.1, 0.7, 1.5, 2.5, 3.1}) {
    PendulumState s;
    s.theta = theta0;
    const double e0 = total_energy(s, p);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
      s = step_frame(s, 0.0, p);
      worst = std::max(worst, std::abs(total_energy(s, p) - e0) / e0);
    }
    CAPTURE(theta0);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("energy never increases with damping and a frozen arm") {
  const PhysicsParams p;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  std::uniform_real_distribution<double> spin(-8.0, 8.0);
  for (int trial = 0; trial < 20; ++trial) {
    PendulumState s;
    s.theta = angle(rng);
    s.theta_dot = spin(rng);
    double e = total_energy(s, p);
    for (int i = 0; i < 2000; ++i) {
      s = step_frame(s, 0.0, p);
      const double next = total_energy(s, p);
      REQUIRE(next <= e + 1e-9);
      e = next;
    }
  }
}

TEST_CASE("servo slew and travel limits hold") {
  const PhysicsParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> target(-3.0, 3.0);
  PendulumState s;
  for (int i = 0; i < 5000; ++i) {
    const auto next = step_frame(s, target(rng), p);
    REQUIRE(std::abs(next.phi - s.phi) <= p.servo_rate_max * PhysicsParams::frame_dt + 1e-12);
    REQUIRE(std::abs(next.phi) <= p.phi_max);
    s = next;
  }
}

TEST_CASE("arm motion pumps energy into the pendulum") {
  const PhysicsParams p;
  PendulumState s;
  s.theta = 0.05;
  const double e0 = total_energy(s, p);
  // Bang-bang arm reversal in phase with the swing.
  for (int i = 0; i < 400; ++i) {
    const double target = s.theta_dot * std::cos(s.theta) > 0 ? -p.phi_max : p.phi_max;
    s = step_frame(s, target, p);
  }
  CHECK(total_energy(s, p) > 100.0 * e0);
}

TEST_CASE("trajectories are deterministic") {
  const PhysicsParams p;
  std::mt19937_64 a(3), b(3);
  PendulumState sa, sb;
  sa.theta = sb.theta = 0.3;
  for (int i = 0; i < 300; ++i) {
    sa = step_with_delay(sa, 0.5, p, DelayModel::paper_uniform(), a).true_end;
    sb = step_with_delay(sb, 0.5, p, DelayModel::paper_uniform(), b).true_end;
  }
  CHECK(sa == sb);
}

TEST_CASE("delay models") {
  const PhysicsParams p;
  PendulumState s;
  s.theta = 2.0;
  std::mt19937_64 rng(5);

  SUBCASE("no delay is twelve frames with observed == end") {
    const auto r = step_with_delay(s, 0.0, p, DelayModel::none(), rng);
    CHECK(r.observed == r.true_end);
    CHECK(r.extra == 0);
    CHECK(r.true_end.frame == 12);
    CHECK(std::abs(r.true_end.time() - 0.060) < 1e-12);
  }
  SUBCASE("zero extra frames") {
    const auto r = step_with_delay(s, 0.0, p, DelayModel::paper_uniform(), 0);
    CHECK(r.observed == r.true_end);
    CHECK(r.true_end.frame == 6);
  }
  SUBCASE("extra frames continue past the observation") {
    const auto r = step_with_delay(s, 0.0, p, DelayModel::paper_uniform(), 2);
    CHECK(r.observed.frame == 6);
    CHECK(r.true_end.frame == 8);
    CHECK(r.true_end == step_frames(s, 0.0, p, 8));
    CHECK_THROWS_AS(step_with_delay(s, 0.0, p, DelayModel::paper_uniform(), 3),
                    std::invalid_argument);
  }
  SUBCASE("extra frames are uniform over {0,1,2}") {
    int counts[3] = {0, 0, 0};
    constexpr int n = 10000;
    for (int i = 0; i < n; ++i) {
      ++counts[step_with_delay(s, 0.0, p, DelayModel::paper_uniform(), rng).extra];
    }
    for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 3.0) < 0.02);
  }
}

TEST_CASE("params validation") {
  PhysicsParams p;
  CHECK_NOTHROW(p.validate());
  p.length = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  PhysicsParams q;
  q.damping = 0.0;
  CHECK_NOTHROW(q.validate());
}
