#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "magtee/errors.hpp"
#include "magtee/sim_world.hpp"

using namespace magtee;

namespace {

SimConfig no_magnets() {
  SimConfig cfg;
  cfg.actuator.reset();
  return cfg;
}

WorldState resting_at(const Vec3& p) {
  WorldState s;
  s.probe_pose.position = p;
  s.actuator_pose.position = p + Vec3(0, 0, 0.25);
  return s;
}

ActuatorSetpoint hold(const WorldState& s) {
  ActuatorSetpoint sp;
  sp.position = s.actuator_pose.position;
  sp.moment_dir = s.actuator_pose.z_axis();
  return sp;
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST(SimStep, FreeFallOneStep) {
  SimConfig cfg = no_magnets();
  cfg.friction = false;
  cfg.damping = false;
  const WorldState s0 = resting_at(Vec3(0, 0, 0.1));
  const WorldState s1 = step(s0, hold(s0), DynamicsParams{}, Environment::free(), 0.01, cfg);
  EXPECT_NEAR(s1.linear_velocity.z(), -0.0981, 1e-12);
  EXPECT_NEAR(s1.linear_velocity.head<2>().norm(), 0.0, 1e-15);
  EXPECT_NEAR(s1.time, 0.01, 1e-15);
  EXPECT_NEAR(s1.last_acceleration.z(), -9.81, 1e-9);
}

TEST(SimStep, StickBelowFrictionThreshold) {
  const Environment env = Environment::plane_channel(0.1, 0.02);
  WorldState s = resting_at(Vec3(0, 0, 0.09));
  s = apply_disturbance(s, Vec3(0.1, 0, 0), 1.0);
  for (int i = 0; i < 50; ++i) s = step(s, hold(s), DynamicsParams{}, env, 0.01, no_magnets());
  EXPECT_EQ(s.probe_pose.position.head<2>(), Eigen::Vector2d::Zero());
  EXPECT_NEAR(s.probe_pose.position.z(), 0.09, 1e-15);
  EXPECT_EQ(s.linear_velocity, Vec3::Zero());
}

TEST(SimStep, SlipAccelerationAboveThreshold) {
  const Environment env = Environment::plane_channel(0.1, 0.02);
  SimConfig cfg = no_magnets();
  cfg.damping = false;
  WorldState s = resting_at(Vec3(0, 0, 0.09));
  s.linear_velocity = Vec3(0.01, 0, 0);
  s = apply_disturbance(s, Vec3(0.5, 0, 0), 1.0);
  const WorldState s1 = step(s, hold(s), DynamicsParams{}, env, 0.01, cfg);
  EXPECT_NEAR((s1.linear_velocity.x() - 0.01) / 0.01, (0.5 - 0.3) / 0.04, 1e-9);
  EXPECT_NEAR(s1.linear_velocity.z(), 0.0, 1e-15);
  EXPECT_NEAR(s1.probe_pose.position.z(), 0.09, 1e-15);
}

TEST(SimStep, StickSlipHysteresisOnRamp) {
  const Environment env = Environment::plane_channel(0.1, 0.02);
  const DynamicsParams dyn;
  WorldState s = resting_at(Vec3(0, 0, 0.09));
  const double rate = 0.2, dt = 0.01;  // N/s ramp
  double first_move_force = -1.0;
  for (int i = 1; i <= 300; ++i) {
    const double f = rate * dt * i;
    s = apply_disturbance(s, Vec3(f, 0, 0), dt);
    s = step(s, hold(s), dyn, env, dt, no_magnets());
    if (s.probe_pose.position.x() != 0.0) {
      first_move_force = f;
      break;
    }
  }
  ASSERT_GT(first_move_force, 0.0);
  EXPECT_GT(first_move_force, dyn.friction_force);
  EXPECT_LE(first_move_force, dyn.friction_force + rate * dt + 1e-12);
}

TEST(SimStep, FreeProbeUnderLateralPush) {
  SimConfig cfg = no_magnets();
  cfg.friction = false;
  cfg.damping = false;
  WorldState s = resting_at(Vec3::Zero());
  s = apply_disturbance(s, Vec3(2.0, 0, 0), 0.5);
  for (int i = 0; i < 50; ++i) s = step(s, hold(s), DynamicsParams{}, Environment::free(), 0.01, cfg);
  EXPECT_NEAR(s.probe_pose.position.x(), 0.5 * (2.0 / 0.04) * 0.25, 0.01 * 6.25);
  EXPECT_FALSE(s.disturbance.has_value());
}

TEST(SimStep, DisturbanceExpiresAndZeroForceIsNeutral) {
  const Environment env = Environment::plane_channel(0.1, 0.02);
  WorldState base = resting_at(Vec3(0, 0, 0.09));
  base.linear_velocity = Vec3(0.02, 0, 0);
  const WorldState zero = apply_disturbance(base, Vec3::Zero(), 0.1);
  const WorldState a = step(base, hold(base), DynamicsParams{}, env, 0.01, no_magnets());
  const WorldState b = step(zero, hold(zero), DynamicsParams{}, env, 0.01, no_magnets());
  EXPECT_TRUE(bit_equal(a.probe_pose.position, b.probe_pose.position));
  EXPECT_TRUE(bit_equal(a.linear_velocity, b.linear_velocity));

  WorldState pushed = apply_disturbance(base, Vec3(1.0, 0, 0), 0.02);
  pushed = step(pushed, hold(pushed), DynamicsParams{}, env, 0.01, no_magnets());
  pushed = step(pushed, hold(pushed), DynamicsParams{}, env, 0.01, no_magnets());
  EXPECT_FALSE(pushed.disturbance.has_value());
  WorldState copy = pushed;
  const WorldState next = step(pushed, hold(pushed), DynamicsParams{}, env, 0.01, no_magnets());
  copy.disturbance.reset();
  const WorldState next_copy = step(copy, hold(copy), DynamicsParams{}, env, 0.01, no_magnets());
  EXPECT_TRUE(bit_equal(next.linear_velocity, next_copy.linear_velocity));
  EXPECT_THROW(apply_disturbance(base, Vec3(1, 0, 0), 0.0), DomainError);
}

TEST(SimStep, EnergyIsConservedWithoutDissipation) {
  SimConfig cfg;
  cfg.friction = false;
  cfg.damping = false;
  const DynamicsParams dyn;
  // Static actuator 0.2 m above; the probe is held against the top plane and
  // oscillates laterally and in attitude in the magnetic potential well.
  const Environment env = Environment::plane_channel(0.09, 0.02);
  WorldState s;
  s.actuator_pose.position = Vec3(0, 0, 0.30);
  s.probe_pose = Pose::from_euler(Vec3(0.005, -0.003, 0.10), EulerAngles{deg2rad(8.0), deg2rad(-5.0), 0.3});
  const ActuatorSetpoint sp = hold(s);
  const double e0 = mechanical_energy(s, dyn, cfg);
  double max_drift = 0.0, max_kinetic = 0.0;
  for (int i = 0; i < 1000; ++i) {
    s = step(s, sp, dyn, env, 0.01, cfg);
    max_drift = std::max(max_drift, std::abs(mechanical_energy(s, dyn, cfg) - e0));
    max_kinetic = std::max(max_kinetic, 0.5 * dyn.mass * s.linear_velocity.squaredNorm() +
                                            0.5 * s.angular_velocity.dot(dyn.inertia * s.angular_velocity));
  }
  EXPECT_NEAR(s.probe_pose.position.z(), 0.10, 1e-12);
  EXPECT_GT(max_kinetic, 1e-6) << "probe did not oscillate";
  EXPECT_LT(max_drift, 0.01 * std::abs(e0));
  // Stricter: drift stays small against the exchanged kinetic energy too.
  EXPECT_LT(max_drift, 0.05 * max_kinetic);
}

TEST(SimStep, TubeConstraintHoldsEveryStep) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 9; ++i) {
    const double x = 0.025 * i;
    pts.emplace_back(x, 0.02 * std::sin(15.0 * x), 0.1 + 0.01 * std::sin(10.0 * x));
  }
  const Environment env = load_centerline(pts);
  const auto& tube = std::get<Tube>(env.kind);
  WorldState s = resting_at(pts[1]);
  s.centerline_s = tube.centerline->closest(pts[1]).s;
  for (int i = 0; i < 300; ++i) {
    if (i % 50 == 0) s = apply_disturbance(s, Vec3(0.4 * std::cos(i), 1.5 * std::sin(i), 0.5), 0.2);
    s = step(s, hold(s), DynamicsParams{}, env, 0.01, no_magnets());
    const double d = tube.centerline->closest(s.probe_pose.position).distance;
    ASSERT_LE(d, tube.radius + 1e-9) << "step " << i;
  }
}

TEST(SimStep, TubeFaultBeyondRecoveryDistance) {
  const Environment env = load_centerline({{0, 0, 0.1}, {0.05, 0, 0.1}, {0.1, 0, 0.1}, {0.15, 0, 0.1}});
  WorldState s = resting_at(Vec3(0.05, 0.05, 0.1));
  EXPECT_THROW(step(s, hold(s), DynamicsParams{}, env, 0.01, no_magnets()), SimulationFault);
}

TEST(SimStep, ActuatorMotionIsRateLimited) {
  WorldState s = resting_at(Vec3::Zero());
  s.actuator_pose.position = Vec3(0, 0, 0.3);
  ActuatorSetpoint sp;
  sp.position = Vec3(0.2, 0, 0.3);
  sp.moment_dir = Vec3::UnitX();
  const WorldState s1 = step(s, sp, DynamicsParams{}, Environment::plane_channel(0.0, 0.0), 0.01);
  EXPECT_NEAR((s1.actuator_pose.position - s.actuator_pose.position).norm(), 0.25 * 0.01, 1e-12);
  EXPECT_NEAR(std::acos(s1.actuator_pose.z_axis().z()), 1.5 * 0.01, 1e-9);
  EXPECT_TRUE(is_rotation(s1.actuator_pose.orientation));
}

TEST(SimStep, DeterministicBitForBit) {
  auto run = [] {
    const Environment env = Environment::plane_channel(0.1, 0.02);
    WorldState s;
    s.probe_pose = Pose::from_euler(Vec3(0.0, 0.1, 0.1), EulerAngles{0.0, deg2rad(180.0), 0.0});
    s.actuator_pose.position = Vec3(0.0, 0.0, 0.35);
    ActuatorSetpoint sp;
    sp.position = Vec3(0.0, 0.05, 0.32);
    sp.moment_dir = Vec3::UnitZ();
    for (int i = 0; i < 200; ++i) {
      if (i == 50) s = apply_disturbance(s, Vec3(0.0, 1.0, 0.0), 0.3);
      s = step(s, sp, DynamicsParams{}, env, 0.01);
    }
    return s;
  };
  const WorldState a = run(), b = run();
  EXPECT_TRUE(bit_equal(a.probe_pose.position, b.probe_pose.position));
  EXPECT_TRUE(bit_equal(a.probe_pose.orientation, b.probe_pose.orientation));
  EXPECT_TRUE(bit_equal(a.angular_velocity, b.angular_velocity));
}

TEST(SimStep, RejectsBadTimeStep) {
  const WorldState s = resting_at(Vec3::Zero());
  EXPECT_THROW(step(s, hold(s), DynamicsParams{}, Environment::free(), 0.0, no_magnets()), DomainError);
  EXPECT_THROW(step(s, hold(s), DynamicsParams{}, Environment::free(), 0.03, no_magnets()), DomainError);
}

TEST(Environment, ValidatesParameters) {
  EXPECT_THROW(Environment::plane_channel(0.1, -0.01), ConfigError);
  EXPECT_THROW(Environment::tube(nullptr), ConfigError);
  auto c = std::make_shared<const Centerline>(
      Centerline::fit({{0, 0, 0.1}, {0.05, 0, 0.1}, {0.1, 0, 0.1}, {0.15, 0, 0.1}}));
  EXPECT_THROW(Environment::tube(c, 0.005), ConfigError);
  EXPECT_NO_THROW(Environment::tube(c, 0.010));
}
