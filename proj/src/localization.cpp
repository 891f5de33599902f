#include "magtee/localization.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <ceres/ceres.h>

#include "magtee/errors.hpp"

namespace magtee {

void EkfConfig::validate() const {
  const Mat4 off = process_noise - Mat4(process_noise.diagonal().asDiagonal());
  if (!process_noise.allFinite() || off.cwiseAbs().maxCoeff() > 0.0) {
    throw ConfigError("EKF process noise must be a finite diagonal matrix");
  }
  if (!(process_noise.diagonal().minCoeff() > 0.0)) {
    throw ConfigError("EKF process noise entries must be positive");
  }
  if (!(measurement_noise_sigma > 0.0)) throw ConfigError("measurement sigma must be positive");
  if (!(dt > 0.0)) throw ConfigError("EKF dt must be positive");
}

void EstimatorState::recompose() {
  full_pose = Pose::from_euler(position, EulerAngles{roll, pitch, yaw});
}

Vec3 EstimatorState::moment_direction() const {
  return ::magtee::moment_direction(roll, pitch, yaw);
}

double moment_tilt_sine(double roll, double pitch) {
  const double c = std::cos(roll) * std::cos(pitch);
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

VecX measurement_model(const Vec3& position, double roll, double pitch, double yaw,
                       const SensorArrayLayout& layout, double moment_magnitude) {
  const Vec3 m = moment_magnitude * moment_direction(roll, pitch, yaw);
  VecX h(3 * layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    h.segment<3>(3 * i) = dipole_field(m, position, layout.positions[i]);
  }
  return h;
}

MatX measurement_jacobian(const Vec3& position, double roll, double pitch, double yaw,
                          const SensorArrayLayout& layout, double moment_magnitude) {
  const Vec3 m = moment_magnitude * moment_direction(roll, pitch, yaw);
  MatX jac(3 * layout.size(), 4);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Vec3& s = layout.positions[i];
    jac.block<3, 3>(3 * i, 0) = dipole_position_jacobian(m, position, s);
    jac.block<3, 1>(3 * i, 3) =
        dipole_yaw_jacobian(roll, pitch, yaw, moment_magnitude, position, s);
  }
  return jac;
}

MatX measurement_jacobian(const EstimatorState& predicted, double roll, double pitch,
                          const SensorArrayLayout& layout, double moment_magnitude) {
  return measurement_jacobian(predicted.position, roll, pitch, predicted.yaw, layout,
                              moment_magnitude);
}

// ------------------------------------------------------------ least squares

namespace {

VecX stack(const FieldReadings& fields) {
  VecX z(3 * fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) z.segment<3>(3 * i) = fields[i];
  return z;
}

// Normalized residuals (h(x) - z) / sigma with analytic Jacobians.
class MagnetometerCost final : public ceres::CostFunction {
 public:
  MagnetometerCost(const VecX& z, double roll, double pitch, const SensorArrayLayout& layout,
                   double moment, double sigma)
      : z_(z), roll_(roll), pitch_(pitch), layout_(layout), moment_(moment), inv_sigma_(1.0 / sigma) {
    set_num_residuals(static_cast<int>(z.size()));
    mutable_parameter_block_sizes()->push_back(3);
    mutable_parameter_block_sizes()->push_back(1);
  }

  bool Evaluate(double const* const* params, double* residuals, double** jacobians) const override {
    const Vec3 p(params[0][0], params[0][1], params[0][2]);
    const double yaw = params[1][0];
    try {
      Eigen::Map<VecX> r(residuals, z_.size());
      r = (measurement_model(p, roll_, pitch_, yaw, layout_, moment_) - z_) * inv_sigma_;
      if (jacobians != nullptr) {
        const MatX jac = measurement_jacobian(p, roll_, pitch_, yaw, layout_, moment_) * inv_sigma_;
        if (jacobians[0] != nullptr) {
          Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> j0(
              jacobians[0], z_.size(), 3);
          j0 = jac.leftCols<3>();
        }
        if (jacobians[1] != nullptr) {
          Eigen::Map<VecX> j1(jacobians[1], z_.size());
          j1 = jac.col(3);
        }
      }
    } catch (const SingularityError&) {
      return false;  // the solver backs off from points on top of a sensor
    }
    return true;
  }

 private:
  VecX z_;
  double roll_, pitch_;
  const SensorArrayLayout& layout_;
  double moment_;
  double inv_sigma_;
};

}  // namespace

LsResult ls_refine(const FieldReadings& capsule_fields, double roll, double pitch,
                   const SensorArrayLayout& layout, double moment_magnitude,
                   const Vec3& start_position, double start_yaw, const LsOptions& opts) {
  if (capsule_fields.size() != layout.size()) {
    throw DomainError("field count does not match the sensor layout");
  }
  const double sigma = opts.noise_sigma > 0.0 ? opts.noise_sigma : 1e-9;
  const VecX z = stack(capsule_fields);

  double p[3] = {start_position.x(), start_position.y(),
                 std::clamp(start_position.z(), opts.min_z, opts.max_z)};
  double yaw[1] = {start_yaw};

  ceres::Problem::Options problem_opts;
  ceres::Problem problem(problem_opts);
  problem.AddResidualBlock(new MagnetometerCost(z, roll, pitch, layout, moment_magnitude, sigma),
                           nullptr, p, yaw);
  problem.SetParameterLowerBound(p, 2, opts.min_z);
  problem.SetParameterUpperBound(p, 2, opts.max_z);
  for (int k = 0; k < 2; ++k) {
    problem.SetParameterLowerBound(p, k, -1.0);
    problem.SetParameterUpperBound(p, k, 1.0);
  }
  const bool yaw_observable = moment_tilt_sine(roll, pitch) >= kYawObservabilityThreshold;
  if (!yaw_observable) problem.SetParameterBlockConstant(yaw);

  ceres::Solver::Options solver;
  solver.linear_solver_type = ceres::DENSE_QR;
  solver.max_num_iterations = opts.max_iterations;
  solver.gradient_tolerance = opts.gradient_tolerance;
  solver.function_tolerance = 1e-14;
  solver.parameter_tolerance = 1e-12;
  solver.logging_type = ceres::SILENT;
  ceres::Solver::Summary summary;
  ceres::Solve(solver, &problem, &summary);

  LsResult res;
  res.position = Vec3(p[0], p[1], p[2]);
  res.yaw = wrap_angle(yaw[0]);
  res.yaw_observable = yaw_observable;
  res.rms_residual = sigma * std::sqrt(2.0 * summary.final_cost / static_cast<double>(z.size()));
  res.iterations = summary.num_successful_steps + summary.num_unsuccessful_steps;
  if (!std::isfinite(res.rms_residual)) res.rms_residual = std::numeric_limits<double>::infinity();
  return res;
}

LsResult ls_initialize(const FieldReadings& capsule_fields, double roll, double pitch,
                       const SensorArrayLayout& layout, double moment_magnitude,
                       const LsOptions& opts) {
  const double sigma = opts.noise_sigma > 0.0 ? opts.noise_sigma : 1e-9;
  std::optional<LsResult> best;
  const int n = std::max(1, opts.grid_points);
  const int yaw_starts = std::max(1, opts.yaw_starts);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double fx = n == 1 ? 0.0 : -1.0 + 2.0 * ix / (n - 1);
      const double fy = n == 1 ? 0.0 : -1.0 + 2.0 * iy / (n - 1);
      const Vec3 start(fx * opts.grid_half_extent, fy * opts.grid_half_extent, opts.grid_height);
      for (int k = 0; k < yaw_starts; ++k) {
        const double yaw0 = wrap_angle(2.0 * std::numbers::pi * k / yaw_starts);
        LsResult r = ls_refine(capsule_fields, roll, pitch, layout, moment_magnitude, start, yaw0,
                               opts);
        const bool inside = std::abs(r.position.x()) <= opts.workspace_half_extent &&
                            std::abs(r.position.y()) <= opts.workspace_half_extent &&
                            r.position.z() >= opts.min_z && r.position.z() <= opts.max_z;
        if (inside && (!best || r.rms_residual < best->rms_residual)) best = r;
        if (!r.yaw_observable) break;  // further yaw starts are identical
      }
    }
  }
  if (!best || best->rms_residual > opts.max_rms_sigmas * sigma) {
    throw NoConvergenceError(
        "least-squares localization found no acceptable optimum (capsule absent or outside "
        "the workspace?)");
  }
  return *best;
}

// -------------------------------------------------------------------- EKF

Mat4 default_initial_covariance() {
  return Eigen::Vector4d(1e-4, 1e-4, 1e-4, deg2rad(10.0) * deg2rad(10.0)).asDiagonal();
}

EstimatorState state_from_ls(const LsResult& ls, double roll, double pitch, double time,
                             const Mat4& covariance) {
  EstimatorState s;
  s.time = time;
  s.position = ls.position;
  s.yaw = ls.yaw;
  s.covariance = covariance;
  s.roll = roll;
  s.pitch = pitch;
  s.yaw_observable = ls.yaw_observable;
  s.recompose();
  return s;
}

EstimatorState ekf_predict(const EstimatorState& state, const Vec3& accel, const Vec3& gyro,
                           const EkfConfig& cfg) {
  const double dt = cfg.dt;
  if (!(dt > 0.0)) throw DomainError("EKF dt must be positive");
  EstimatorState out = state;
  const Mat3 r = rotation_from_euler(EulerAngles{state.roll, state.pitch, state.yaw});

  // Previous velocity is taken as zero.
  out.position = state.position + 0.5 * (r * accel + gravity_vector()) * dt * dt;

  const Mat3 r_next = r * exp_so3(gyro * dt);
  const EulerAngles e = euler_from_rotation(r_next);
  if (std::abs(e.pitch) >= 0.5 * std::numbers::pi - kGimbalMargin) {
    throw GimbalError("predicted pitch within gimbal margin of +-90 deg");
  }
  out.yaw = wrap_angle(e.yaw);

  Mat4 q = cfg.process_noise;
  if (moment_tilt_sine(state.roll, state.pitch) < kYawObservabilityThreshold) q(3, 3) *= 10.0;
  out.covariance = state.covariance + q;  // F = I
  out.recompose();
  return out;
}

EstimatorState ekf_update(const EstimatorState& predicted, const FieldReadings& capsule_fields,
                          double roll, double pitch, const SensorArrayLayout& layout,
                          double moment_magnitude, const EkfConfig& cfg) {
  if (capsule_fields.size() != layout.size()) {
    throw DomainError("field count does not match the sensor layout");
  }
  const double var = cfg.measurement_noise_sigma * cfg.measurement_noise_sigma;
  const Mat4& p = predicted.covariance;

  const MatX h = measurement_jacobian(predicted.position, roll, pitch, predicted.yaw, layout,
                                      moment_magnitude);
  const VecX innovation = stack(capsule_fields) - measurement_model(predicted.position, roll,
                                                                     pitch, predicted.yaw, layout,
                                                                     moment_magnitude);
  const MatX hp = h * p;  // 3N x 4
  MatX s = hp * h.transpose();
  s.diagonal().array() += var;

  const Eigen::LLT<MatX> llt(s);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rcond > 1e-15)) {
    throw NumericalError("innovation covariance is singular or indefinite", rcond);
  }
  // K = P H^T S^-1 = (S^-1 H P)^T
  Eigen::Matrix<double, 4, Eigen::Dynamic> k = llt.solve(hp).transpose();

  const bool yaw_observable = moment_tilt_sine(roll, pitch) >= kYawObservabilityThreshold;
  if (!yaw_observable) k.row(3).setZero();

  EstimatorState out = predicted;
  const Eigen::Vector4d dx = k * innovation;
  out.position += dx.head<3>();
  out.yaw = wrap_angle(predicted.yaw + dx(3));
  out.roll = roll;
  out.pitch = pitch;
  out.yaw_observable = yaw_observable;

  const Mat4 ikh = Mat4::Identity() - k * h;
  Mat4 joseph = ikh * p * ikh.transpose() + var * (k * k.transpose());
  out.covariance = 0.5 * (joseph + joseph.transpose());
  out.recompose();
  return out;
}

EstimatorState track_step(const EstimatorState& state, const SensorFrame& frame,
                          const std::optional<PlacedMagnet>& actuator,
                          const EnvironmentField& env, const SensorArrayLayout& layout,
                          const MagnetSpec& capsule_spec, const EkfConfig& cfg) {
  const FieldReadings fields = extract_capsule_field(frame, layout, actuator, env);
  EstimatorState predicted = ekf_predict(state, frame.imu_accel, frame.imu_gyro, cfg);
  EstimatorState updated = ekf_update(predicted, fields, frame.imu_roll, frame.imu_pitch, layout,
                                      capsule_spec.dipole_moment_magnitude(), cfg);
  updated.time = frame.timestamp;
  return updated;
}

void write_estimate_header(std::ostream& out) {
  out << "t,px,py,pz,roll,pitch,yaw,trace_P\n";
}

void write_estimate_row(std::ostream& out, const EstimatorState& s) {
  out << s.time << ',' << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << ','
      << s.roll << ',' << s.pitch << ',' << s.yaw << ',' << s.covariance.trace() << '\n';
}

}  // namespace magtee
