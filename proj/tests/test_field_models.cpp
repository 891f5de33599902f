#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "magtee/errors.hpp"
#include "magtee/field_models.hpp"

using namespace magtee;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

double rel_err(const Vec3& a, const Vec3& b) { return (a - b).norm() / b.norm(); }

// Reference integrand of the generalized complete elliptic integral.
double cel_quadrature(double kc, double p, double c, double s) {
  auto f = [&](double phi) {
    const double c2 = std::cos(phi) * std::cos(phi);
    const double s2 = std::sin(phi) * std::sin(phi);
    return (c * c2 + s * s2) / ((c2 + p * s2) * std::sqrt(c2 + kc * kc * s2));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kPi / 2, 15,
                                                                       1e-14);
}

// Field of a uniformly magnetized cylinder as a stack of current loops
// (surface current M = Br/mu0 on the side), integrated over the height.
// Returns (b_rho, b_z) in the magnet frame.
std::pair<double, double> solenoid_field(double radius, double half_length, double br, double rho,
                                         double z) {
  const double m = br / kMu0;
  auto loop = [&](double z0, bool axial) {
    const double zeta = z - z0;
    const double sum = (radius + rho) * (radius + rho) + zeta * zeta;
    const double diff = (radius - rho) * (radius - rho) + zeta * zeta;
    const double k = std::sqrt(4.0 * radius * rho / sum);
    const double kk = std::comp_ellint_1(k);
    const double ee = std::comp_ellint_2(k);
    const double pref = kMu0 * m / (2.0 * kPi * std::sqrt(sum));
    if (axial) return pref * (kk + (radius * radius - rho * rho - zeta * zeta) / diff * ee);
    return pref * zeta / rho * (-kk + (radius * radius + rho * rho + zeta * zeta) / diff * ee);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double bz = GK::integrate([&](double z0) { return loop(z0, true); }, -half_length,
                                  half_length, 15, 1e-13);
  const double brho = GK::integrate([&](double z0) { return loop(z0, false); }, -half_length,
                                    half_length, 15, 1e-13);
  return {brho, bz};
}

double on_axis_cylinder(double radius, double half_length, double br, double z) {
  return 0.5 * br *
         ((z + half_length) / std::hypot(z + half_length, radius) -
          (z - half_length) / std::hypot(z - half_length, radius));
}

}  // namespace

// ------------------------------------------------------------ dipole

TEST(DipoleField, OnAxisClosedForm) {
  const Vec3 b = dipole_field(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 0.1));
  const double expected = kMu0 * 1.0 / (2 * kPi * 0.001);
  EXPECT_NEAR(b.z(), expected, 1e-12 * expected);
  EXPECT_NEAR(b.z(), 2.0e-4, 1e-15);
  EXPECT_EQ(b.x(), 0.0);
  EXPECT_EQ(b.y(), 0.0);
}

TEST(DipoleField, EquatorialClosedForm) {
  const Vec3 b = dipole_field(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0.1, 0, 0));
  EXPECT_NEAR(b.z(), -1.0e-4, 1e-16);
  EXPECT_NEAR(b.x(), 0.0, 1e-20);
}

TEST(DipoleField, SingularityGuard) {
  EXPECT_THROW(dipole_field(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 5e-5)), SingularityError);
  EXPECT_NO_THROW(dipole_field(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 2e-4)));
}

TEST(DipoleField, MatchesVolumeDiscretizedCube) {
  // 20^3 cells of a 20 mm cube, each a point dipole carrying 1/8000 of the moment.
  constexpr int n = 20;
  const double side = 0.02;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 m = 3.0 * random_unit(rng);
    const Vec3 target = (0.2 + 0.1 * trial) * random_unit(rng);
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          const Vec3 c = side * (Vec3(i, j, k) + Vec3::Constant(0.5)) / n -
                         Vec3::Constant(side / 2);
          sum += dipole_field(m / (n * n * n), c, target);
        }
      }
    }
    EXPECT_LT(rel_err(dipole_field(m, Vec3::Zero(), target), sum), 1e-3);
  }
}

TEST(DipoleField, CubicDecay) {
  const Vec3 m(0.3, -0.2, 1.0);
  const Vec3 r(0.05, 0.07, 0.11);
  const Vec3 b1 = dipole_field(m, Vec3::Zero(), r);
  const Vec3 b2 = dipole_field(m, Vec3::Zero(), 2.0 * r);
  EXPECT_LT(rel_err(8.0 * b2, b1), 1e-14);
}

TEST(DipoleField, DivergenceFree) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec3 m = 5.0 * random_unit(rng);
    const Vec3 p = u(rng) * random_unit(rng);
    double div = 0.0;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      div += (dipole_field(m, Vec3::Zero(), p + e)[k] - dipole_field(m, Vec3::Zero(), p - e)[k]) /
             (2 * h);
    }
    // |div| relative to |b| per metre of displacement.
    EXPECT_LT(std::abs(div) * h, 1e-9 * dipole_field(m, Vec3::Zero(), p).norm());
  }
}

// ------------------------------------------------------- derivatives

TEST(DipoleJacobians, PositionJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.06, 0.3);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec3 m = 3.8 * random_unit(rng);
    const Vec3 src = 0.1 * random_unit(rng);
    const Vec3 tgt = src + u(rng) * random_unit(rng);
    const Mat3 j = dipole_position_jacobian(m, src, tgt);
    Mat3 fd;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      fd.col(k) = (dipole_field(m, src + e, tgt) - dipole_field(m, src - e, tgt)) / (2 * h);
    }
    EXPECT_LT((j - fd).norm() / fd.norm(), 1e-5) << "config " << i;
  }
}

TEST(DipoleJacobians, OnAxisSymmetryAndHomogeneity) {
  const Vec3 m(0, 0, 2.0);
  const Mat3 j = dipole_position_jacobian(m, Vec3::Zero(), Vec3(0, 0, 0.1));
  EXPECT_NEAR(j(0, 0), j(1, 1), 1e-15 * j.norm());
  const Vec3 tgt(0.03, -0.05, 0.08);
  const Mat3 j1 = dipole_position_jacobian(Vec3(0.1, 0.4, 1), Vec3::Zero(), tgt);
  const Mat3 j2 = dipole_position_jacobian(Vec3(0.1, 0.4, 1), Vec3::Zero(), 2.0 * tgt);
  EXPECT_NEAR(j2.norm() / j1.norm(), 1.0 / 16.0, 1e-14);
}

TEST(DipoleJacobians, YawJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-1.2, 1.2);
  std::uniform_real_distribution<double> yaw_d(-kPi, kPi);
  std::uniform_real_distribution<double> u(0.06, 0.3);
  const double h = 1e-6;
  const double mag = 3.8;
  for (int i = 0; i < 100; ++i) {
    const double a = ang(rng), b = ang(rng), g = yaw_d(rng);
    const Vec3 src = 0.1 * random_unit(rng);
    const Vec3 tgt = src + u(rng) * random_unit(rng);
    const Vec3 j = dipole_yaw_jacobian(a, b, g, mag, src, tgt);
    const Vec3 fd = (dipole_field(mag * moment_direction(a, b, g + h), src, tgt) -
                     dipole_field(mag * moment_direction(a, b, g - h), src, tgt)) /
                    (2 * h);
    EXPECT_LT((j - fd).norm() / fd.norm(), 1e-5) << "config " << i;
  }
}

TEST(DipoleJacobians, YawJacobianVanishesForVerticalMoment) {
  const Vec3 j = dipole_yaw_jacobian(0.0, 0.0, 0.7, 3.8, Vec3(0, 0, 0.1), Vec3(0.12, 0.05, 0));
  EXPECT_EQ(j, Vec3::Zero());
}

TEST(DipoleJacobians, YawJacobianAtNinetyDegreeRoll) {
  // alpha = 90 deg, beta = 0: m = (sin g, -cos g, 0) and dm/dg = (cos g, sin g, 0).
  for (const double g : {0.0, 0.4, -2.0}) {
    const Vec3 src(0.01, 0.02, 0.1), tgt(0.12, -0.06, 0.0);
    const Vec3 j = dipole_yaw_jacobian(kPi / 2, 0.0, g, 3.8, src, tgt);
    const Vec3 expected = dipole_field(3.8 * Vec3(std::cos(g), std::sin(g), 0.0), src, tgt);
    EXPECT_LT((j - expected).norm(), 1e-14 * expected.norm());
  }
}

TEST(MomentDirection, MatchesRotationThirdColumn) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> a(-3, 3);
  for (int i = 0; i < 50; ++i) {
    const EulerAngles e{a(rng), a(rng) / 2, a(rng)};
    EXPECT_LT((moment_direction(e.roll, e.pitch, e.yaw) - rotation_from_euler(e).col(2)).norm(),
              1e-14);
  }
}

// ------------------------------------------------ elliptic integral

TEST(EllipticIntegral, TrivialValues) {
  EXPECT_NEAR(generalized_elliptic_integral(1, 1, 1, 1), kPi / 2, 1e-15);
  EXPECT_NEAR(generalized_elliptic_integral(1, 1, 1, -1), 0.0, 1e-15);
}

TEST(EllipticIntegral, MatchesAdaptiveQuadrature) {
  EXPECT_NEAR(generalized_elliptic_integral(0.5, 1, 1, 1), cel_quadrature(0.5, 1, 1, 1), 1e-12);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> kc(0.05, 2.0), p(0.05, 3.0), cs(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double a = kc(rng), b = p(rng), c = cs(rng), s = cs(rng);
    const double ref = cel_quadrature(a, b, c, s);
    EXPECT_NEAR(generalized_elliptic_integral(a, b, c, s), ref,
                1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST(EllipticIntegral, DomainErrors) {
  EXPECT_THROW(generalized_elliptic_integral(0.0, 1, 1, 1), DomainError);
  EXPECT_THROW(generalized_elliptic_integral(-0.2, 1, 1, 1), DomainError);
  EXPECT_THROW(generalized_elliptic_integral(0.5, 0.0, 1, 1), DomainError);
  EXPECT_THROW(generalized_elliptic_integral(0.5, -1.0, 1, 1), DomainError);
}

// ------------------------------------------------------- cylinder

TEST(CylinderField, OnAxisMatchesClosedForm) {
  const MagnetSpec spec = default_actuator_magnet();
  const Vec3 b = cylinder_field(spec, Pose{}, Vec3(0, 0, 0.2));
  const double expected = on_axis_cylinder(0.045, 0.045, 1.35, 0.2);
  EXPECT_NEAR(b.z(), expected, 1e-6 * expected);
  EXPECT_NEAR(b.z(), 1.566e-2, 1e-5);
  EXPECT_EQ(b.x(), 0.0);
  EXPECT_EQ(b.y(), 0.0);
  for (const double z : {-0.3, -0.05, 0.046, 0.1, 0.5}) {
    const Vec3 bz = cylinder_field(spec, Pose{}, Vec3(0, 0, z));
    EXPECT_NEAR(bz.z(), on_axis_cylinder(0.045, 0.045, 1.35, z), 1e-10 * std::abs(bz.z()));
    EXPECT_EQ(bz.x(), 0.0);
  }
}

TEST(CylinderField, OffAxisMatchesCurrentLoopIntegration) {
  const double radius = 0.045, half = 0.045, br = 1.35;
  const MagnetSpec spec = MagnetSpec::cylinder(radius, half, br);
  const std::vector<std::pair<double, double>> pts = {
      {0.02, 0.06}, {0.06, 0.0}, {0.1, 0.1}, {0.05, -0.2}, {0.2, 0.03}, {0.3, 0.25}, {0.046, 0.01}};
  for (const auto& [rho, z] : pts) {
    const Vec3 b = cylinder_field(spec, Pose{}, Vec3(rho, 0.0, z));
    const auto [brho, bz] = solenoid_field(radius, half, br, rho, z);
    const double scale = std::hypot(brho, bz);
    EXPECT_NEAR(b.x(), brho, 1e-9 * scale) << rho << "," << z;
    EXPECT_NEAR(b.z(), bz, 1e-9 * scale) << rho << "," << z;
    EXPECT_NEAR(b.y(), 0.0, 1e-15);
  }
}

TEST(CylinderField, InsideAndEdgeErrors) {
  const MagnetSpec spec = default_actuator_magnet();
  EXPECT_THROW(cylinder_field(spec, Pose{}, Vec3(0.01, 0.0, 0.01)), DomainError);
  EXPECT_THROW(cylinder_field(spec, Pose{}, Vec3(0.045, 0.0, 0.045)), SingularityError);
  EXPECT_THROW(cylinder_field(spec, Pose{}, Vec3(0.0, -0.045, -0.045)), SingularityError);
  EXPECT_THROW(cylinder_field(MagnetSpec::cuboid(0.01, 0.01, 0.01, 1.4), Pose{}, Vec3(0, 0, 1)),
               DomainError);
}

TEST(CylinderField, ConvergesToDipoleWithDistance) {
  const MagnetSpec spec = default_actuator_magnet();
  const double m = spec.dipole_moment_magnitude();
  double previous = 1.0;
  for (double d = 0.15; d <= 0.40 + 1e-12; d += 0.01) {
    const Vec3 p(0, 0, d);
    const double err = rel_err(dipole_field(Vec3(0, 0, m), Vec3::Zero(), p),
                               cylinder_field(spec, Pose{}, p));
    EXPECT_LT(err, previous) << d;
    if (d >= 0.2 - 1e-12) EXPECT_LT(err, 0.025) << d;
    previous = err;
  }
}

TEST(CylinderField, DipoleLimitAtLargeSeparation) {
  std::mt19937_64 rng(21);
  // The default magnet (L/D = 1) keeps an octupole term, so 0.1 % is reached
  // at 16 bounding radii. A cylinder with L/R = sqrt(3)/2 has no octupole
  // and is already within 0.1 % at 10 bounding radii.
  struct Case {
    MagnetSpec spec;
    double radii;
  };
  const std::vector<Case> cases = {{default_actuator_magnet(), 16.0},
                                   {MagnetSpec::cylinder(0.045, 0.045 * std::sqrt(3.0) / 2, 1.35),
                                    10.0}};
  for (const Case& c : cases) {
    const double m = c.spec.dipole_moment_magnitude();
    const Pose pose{Vec3(0.01, -0.02, 0.03), rotation_from_euler({0.3, -0.2, 1.1})};
    std::uniform_real_distribution<double> extra(1.0, 1.5);
    for (int i = 0; i < 50; ++i) {
      const Vec3 dir = random_unit(rng);
      const Vec3 p = pose.position + c.radii * c.spec.bounding_radius() * extra(rng) * dir;
      const Vec3 exact = cylinder_field(c.spec, pose, p);
      const Vec3 dip = dipole_field(m * pose.z_axis(), pose.position, p);
      EXPECT_LT(rel_err(dip, exact), 1e-3) << i;
    }
  }
}

TEST(CylinderField, RotationEquivariance) {
  const MagnetSpec spec = default_actuator_magnet();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> a(-3, 3);
  for (int i = 0; i < 20; ++i) {
    const Pose pose{Vec3(0.02, 0.01, -0.03), rotation_from_euler({a(rng), a(rng) / 2, a(rng)})};
    const Vec3 target = pose.position + 0.2 * random_unit(rng);
    const Mat3 q = rotation_from_euler({a(rng), a(rng) / 2, a(rng)});
    const Pose rotated{q * pose.position, q * pose.orientation};
    const Vec3 b = cylinder_field(spec, pose, target);
    const Vec3 b_rot = cylinder_field(spec, rotated, q * target);
    EXPECT_LT((b_rot - q * b).norm(), 1e-9 * b.norm());
  }
}

// ---------------------------------------------------------- specs

TEST(MagnetSpec, DerivedMoments) {
  EXPECT_NEAR(default_actuator_magnet().dipole_moment_magnitude(), 615.1, 0.05);
  EXPECT_NEAR(default_capsule_magnet().dipole_moment_magnitude(), 3.807, 0.001);
  const double v = kPi * 0.045 * 0.045 * 0.09;
  EXPECT_NEAR(moment_from_spec(default_actuator_magnet()), 1.35 * v / kMu0, 1e-9);
  EXPECT_EQ(moment_from_spec(MagnetSpec::cylinder(0.01, 0.01, 0.0)), 0.0);
}

TEST(MagnetSpec, RejectsBadDimensions) {
  EXPECT_THROW(MagnetSpec::cylinder(0.0, 0.01, 1.0), DomainError);
  EXPECT_THROW(MagnetSpec::cylinder(0.01, -0.01, 1.0), DomainError);
  EXPECT_THROW(MagnetSpec::cuboid(0.01, 0.0, 0.01, 1.0), DomainError);
  EXPECT_THROW(MagnetSpec::cuboid(0.01, 0.01, 0.01, -1.0), DomainError);
}

// ---------------------------------------------------------- wrench

TEST(DipoleWrench, CoaxialAttraction) {
  const double ma = default_actuator_magnet().dipole_moment_magnitude();
  const double mc = default_capsule_magnet().dipole_moment_magnitude();
  const Wrench w = dipole_wrench(Vec3(0, 0, mc), Vec3::Zero(), Vec3(0, 0, ma), Vec3(0, 0, 0.2));
  const double expected = 3 * kMu0 * ma * mc / (2 * kPi * std::pow(0.2, 4));
  EXPECT_NEAR(w.force.z(), expected, 1e-12 * expected);
  EXPECT_NEAR(w.force.z(), 0.878, 1e-3);
  EXPECT_NEAR(w.force.head<2>().norm(), 0.0, 1e-15);
  EXPECT_EQ(w.torque, Vec3::Zero());
}

TEST(DipoleWrench, ZeroTorqueWhenAlignedWithField) {
  const Vec3 ma(10, -20, 600), pa(0.05, 0.02, 0.25);
  const Vec3 b = dipole_field(ma, pa, Vec3::Zero());
  const Wrench w = dipole_wrench(3.8 * b.normalized(), Vec3::Zero(), ma, pa);
  EXPECT_LT(w.torque.norm(), 1e-15);
}

TEST(DipoleWrench, ForceMatchesEnergyGradient) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.08, 0.3);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec3 mc = 3.8 * random_unit(rng), ma = 615.0 * random_unit(rng);
    const Vec3 pc = 0.05 * random_unit(rng);
    const Vec3 pa = pc + u(rng) * random_unit(rng);
    const Wrench w = dipole_wrench(mc, pc, ma, pa);
    Vec3 fd;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      fd[k] = -(dipole_interaction_energy(mc, pc + e, ma, pa) -
                dipole_interaction_energy(mc, pc - e, ma, pa)) /
              (2 * h);
    }
    EXPECT_LT((w.force - fd).norm() / fd.norm(), 1e-5) << i;
    EXPECT_TRUE(w.all_finite());
  }
}

TEST(DipoleWrench, NewtonsThirdLaw) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 50; ++i) {
    const Vec3 m1 = 3.8 * random_unit(rng), m2 = 615.0 * random_unit(rng);
    const Vec3 p1 = 0.05 * random_unit(rng), p2 = p1 + 0.2 * random_unit(rng);
    const Vec3 f12 = dipole_wrench(m1, p1, m2, p2).force;
    const Vec3 f21 = dipole_wrench(m2, p2, m1, p1).force;
    EXPECT_LT((f12 + f21).norm(), 1e-12 * f12.norm());
  }
}

TEST(DipoleWrench, ProximityGuard) {
  EXPECT_THROW(dipole_wrench(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, 0, 0.04)),
               ProximityError);
}
