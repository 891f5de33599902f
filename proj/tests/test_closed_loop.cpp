#include <gtest/gtest.h>

#include <cmath>

#include "magtee/closed_loop.hpp"
#include "magtee/errors.hpp"
#include "magtee/metrics.hpp"

using namespace magtee;

namespace {

ClosedLoopConfig channel_config() {
  ClosedLoopConfig cfg;
  cfg.environment = Environment::plane_channel(0.1, 0.002);
  cfg.ekf.process_noise = Eigen::Vector4d(1e-5, 1e-5, 1e-5, 30.0).asDiagonal();
  cfg.control_rate = 100.0;
  cfg.controller.gains = ControlGains::diagonal(Vec3::Constant(120), Vec3::Constant(1),
                                                Vec3::Constant(0.02), Vec3::Constant(0.005));
  cfg.controller.solver.torque_weight = 30.0;
  cfg.controller.solver.restarts = false;
  cfg.controller.solver.motion_weight = 3.0;
  cfg.controller.solver.rotation_weight = 0.5;
  cfg.controller.max_control_force = 0.32;
  cfg.controller.dynamics.friction_force = 0.0;
  return cfg;
}

WorldState start_world() {
  WorldState w;
  w.probe_pose = Pose::from_euler(Vec3(-0.15, 0.0, 0.1), EulerAngles{M_PI, 0, 0});
  w.actuator_pose.position = Vec3(-0.15, 0.0, 0.35);
  w.actuator_pose.orientation = rot_x(M_PI);
  return w;
}

const ControlTarget kHoldTarget{Vec3(-0.15, 0.0, 0.1), -Vec3::UnitZ()};

}  // namespace

TEST(ClosedLoopConfig, RejectsBadRates) {
  ClosedLoopConfig cfg = channel_config();
  cfg.control_rate = 30.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.control_rate = 200.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = channel_config();
  cfg.sim.actuator.reset();
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ClosedLoop, SnapshotIsSelfConsistent) {
  ClosedLoop loop(channel_config(), start_world(), kHoldTarget);
  for (int i = 0; i < 50; ++i) {
    const LoopSnapshot& s = loop.tick();
    EXPECT_NEAR(s.time, 0.01 * (i + 1), 1e-12);
    EXPECT_NEAR(s.position_error, (s.world.probe_pose.position - s.target.desired_position).norm(), 1e-15);
    EXPECT_NEAR(s.orientation_error, angle_between(s.world.probe_pose.z_axis(), s.target.desired_moment_dir),
                1e-15);
    EXPECT_NEAR(s.estimate_position_error, (s.estimate.position - s.world.probe_pose.position).norm(), 1e-15);
    EXPECT_TRUE(s.control_tick);
  }
}

TEST(ClosedLoop, DeterministicPerSeed) {
  ClosedLoop a(channel_config(), start_world(), kHoldTarget);
  ClosedLoop b(channel_config(), start_world(), kHoldTarget);
  for (int i = 0; i < 40; ++i) {
    const LoopSnapshot& sa = a.tick();
    const LoopSnapshot& sb = b.tick();
    ASSERT_EQ(sa.world.probe_pose.position, sb.world.probe_pose.position);
    ASSERT_EQ(sa.estimate.position, sb.estimate.position);
    ASSERT_EQ(sa.setpoint.position, sb.setpoint.position);
  }
}

TEST(ClosedLoop, HoldsProbeAtRest) {
  ClosedLoop loop(channel_config(), start_world(), kHoldTarget);
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 300; ++i) {
    const LoopSnapshot& s = loop.tick();
    if (s.time >= 1.0) {
      sum += s.position_error;
      ++n;
    }
    EXPECT_LT(s.orientation_error, deg2rad(10.0));
  }
  EXPECT_LT(sum / n, 0.005);
}

TEST(ClosedLoop, ControlDividerSkipsTicks) {
  ClosedLoopConfig cfg = channel_config();
  cfg.control_rate = 50.0;
  ClosedLoop loop(cfg, start_world(), kHoldTarget);
  EXPECT_FALSE(loop.tick().control_tick);
  EXPECT_TRUE(loop.tick().control_tick);
}

TEST(ClosedLoop, DisturbanceMovesProbe) {
  ClosedLoop loop(channel_config(), start_world(), kHoldTarget);
  for (int i = 0; i < 100; ++i) loop.tick();
  const double y0 = loop.latest().world.probe_pose.position.y();
  loop.disturb(Vec3(0, 0.5, 0), 0.15);
  for (int i = 0; i < 30; ++i) loop.tick();
  EXPECT_GT(loop.latest().world.probe_pose.position.y() - y0, 0.02);
}

TEST(ClosedLoop, TargetAndGainValidation) {
  ClosedLoop loop(channel_config(), start_world(), kHoldTarget);
  EXPECT_THROW(loop.set_target({Vec3::Zero(), Vec3(0, 0, 2)}), DomainError);
  ControlGains g;
  g.kp(0, 1) = 1.0;
  EXPECT_THROW(loop.set_gains(g), ConfigError);
  loop.set_target({Vec3(-0.14, 0, 0.1), -Vec3::UnitZ()});
  EXPECT_NEAR(loop.latest().position_error,
              (loop.latest().world.probe_pose.position - Vec3(-0.14, 0, 0.1)).norm(), 1e-15);
}
