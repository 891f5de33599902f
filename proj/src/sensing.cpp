#include "magtee/sensing.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "magtee/errors.hpp"

namespace magtee {

using nlohmann::json;

SensorArrayLayout SensorArrayLayout::grid(int nx, int ny, double spacing, double height,
                                          double noise_sigma) {
  SensorArrayLayout layout;
  layout.noise_sigma = noise_sigma;
  const double x0 = -0.5 * (nx - 1) * spacing;
  const double y0 = -0.5 * (ny - 1) * spacing;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      layout.positions.emplace_back(x0 + i * spacing, y0 + j * spacing, height);
    }
  }
  return layout;
}

void SensorArrayLayout::validate() const {
  if (positions.size() < 8) {
    throw ConfigError("sensor array needs at least 8 sensors, got " +
                      std::to_string(positions.size()));
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("sensor noise sigma must be finite and non-negative");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) throw ConfigError("non-finite sensor position");
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      if ((positions[i] - positions[j]).norm() < 1e-9) {
        throw ConfigError("duplicate sensor position at index " + std::to_string(j));
      }
    }
  }
}

EnvironmentField EnvironmentField::earth_like(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 2e-6);
  const Vec3 common(2.0e-5, 0.3e-5, -4.0e-5);
  EnvironmentField env;
  env.per_sensor_bias.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    env.per_sensor_bias.push_back(common + Vec3(jitter(rng), jitter(rng), jitter(rng)));
  }
  return env;
}

void EnvironmentField::validate() const {
  for (const Vec3& b : per_sensor_bias) {
    if (!b.allFinite()) throw DomainError("non-finite environmental field");
    if (b.norm() >= 2e-4) {
      throw DomainError("environmental field exceeds the 2e-4 T sanity bound; "
                        "were magnets present during calibration?");
    }
  }
}

Vec3 actuator_field(const PlacedMagnet& actuator, const Vec3& point) {
  if (actuator.spec.is_cylinder()) return cylinder_field(actuator.spec, actuator.pose, point);
  return dipole_field(actuator.moment(), actuator.pose.position, point);
}

FieldReadings ideal_array_readings(const SensorArrayLayout& layout,
                                   const std::optional<PlacedMagnet>& capsule,
                                   const std::optional<PlacedMagnet>& actuator,
                                   const EnvironmentField& env) {
  if (env.per_sensor_bias.size() != layout.size()) {
    throw DomainError("environment field size does not match the sensor layout");
  }
  FieldReadings out(layout.size());
  const Vec3 capsule_moment = capsule ? capsule->moment() : Vec3::Zero();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Vec3 b = env.per_sensor_bias[i];
    if (capsule) b += dipole_field(capsule_moment, capsule->pose.position, layout.positions[i]);
    if (actuator) b += actuator_field(*actuator, layout.positions[i]);
    out[i] = b;
  }
  return out;
}

FieldReadings sample_array(const SensorArrayLayout& layout,
                           const std::optional<PlacedMagnet>& capsule,
                           const std::optional<PlacedMagnet>& actuator,
                           const EnvironmentField& env, std::mt19937_64& rng) {
  FieldReadings out = ideal_array_readings(layout, capsule, actuator, env);
  if (layout.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, layout.noise_sigma);
    for (Vec3& b : out) {
      b.x() += noise(rng);
      b.y() += noise(rng);
      b.z() += noise(rng);
    }
  }
  return out;
}

FieldReadings sample_array(const SensorArrayLayout& layout,
                           const std::optional<PlacedMagnet>& capsule,
                           const std::optional<PlacedMagnet>& actuator,
                           const EnvironmentField& env, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  return sample_array(layout, capsule, actuator, env, rng);
}

EnvironmentField estimate_environment(const std::vector<SensorFrame>& frames) {
  if (frames.size() < kMinEnvironmentFrames) {
    throw DomainError("environment estimation needs at least " +
                      std::to_string(kMinEnvironmentFrames) + " frames, got " +
                      std::to_string(frames.size()));
  }
  const std::size_t n = frames.front().raw_fields.size();
  EnvironmentField env = EnvironmentField::zeros(n);
  for (const SensorFrame& f : frames) {
    if (f.raw_fields.size() != n) throw DomainError("frames disagree on sensor count");
    for (std::size_t i = 0; i < n; ++i) env.per_sensor_bias[i] += f.raw_fields[i];
  }
  for (Vec3& b : env.per_sensor_bias) b /= static_cast<double>(frames.size());
  env.validate();
  return env;
}

FieldReadings extract_capsule_field(const SensorFrame& frame, const SensorArrayLayout& layout,
                                    const std::optional<PlacedMagnet>& actuator,
                                    const EnvironmentField& env) {
  const std::size_t n = layout.size();
  if (frame.raw_fields.size() != n || env.per_sensor_bias.size() != n) {
    throw DomainError("frame, layout and environment disagree on sensor count");
  }
  FieldReadings out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 b = frame.raw_fields[i] - env.per_sensor_bias[i];
    if (actuator) b -= actuator_field(*actuator, layout.positions[i]);
    out[i] = b;
  }
  return out;
}

ImuReading sample_imu(const Pose& true_pose, const Vec3& true_world_accel,
                      const Vec3& true_body_gyro, const ImuNoiseConfig& noise,
                      std::mt19937_64& rng) {
  const EulerAngles e = true_pose.euler();
  if (std::abs(e.pitch) >= 0.5 * std::numbers::pi - kGimbalMargin) {
    throw GimbalError("IMU pitch within gimbal margin of +-90 deg");
  }
  ImuReading imu;
  imu.accel = true_pose.orientation.transpose() * (true_world_accel - gravity_vector());
  imu.gyro = true_body_gyro;
  imu.roll = e.roll;
  imu.pitch = e.pitch;

  auto perturb = [&rng](double sigma) {
    if (sigma <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
  };
  for (int k = 0; k < 3; ++k) imu.accel[k] += perturb(noise.accel_sigma);
  for (int k = 0; k < 3; ++k) imu.gyro[k] += perturb(noise.gyro_sigma);
  imu.roll += perturb(noise.attitude_sigma);
  imu.pitch += perturb(noise.attitude_sigma);
  return imu;
}

ImuReading sample_imu(const Pose& true_pose, const Vec3& true_world_accel,
                      const Vec3& true_body_gyro, const ImuNoiseConfig& noise,
                      std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  return sample_imu(true_pose, true_world_accel, true_body_gyro, noise, rng);
}

// ------------------------------------------------------------- recordings

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(std::string("expected a 3-vector for '") + what + "'");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::string frame_to_json_line(const RecordedFrame& rec) {
  const SensorFrame& f = rec.frame;
  json j;
  j["t"] = f.timestamp;
  json fields = json::array();
  for (const Vec3& b : f.raw_fields) fields.push_back(vec_json(b));
  j["fields"] = std::move(fields);
  j["accel"] = vec_json(f.imu_accel);
  j["gyro"] = vec_json(f.imu_gyro);
  j["roll"] = f.imu_roll;
  j["pitch"] = f.imu_pitch;
  if (rec.actuator_pose) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
      rot.push_back(json::array({rec.actuator_pose->orientation(r, 0),
                                 rec.actuator_pose->orientation(r, 1),
                                 rec.actuator_pose->orientation(r, 2)}));
    }
    j["actuator"] = {{"position", vec_json(rec.actuator_pose->position)},
                     {"rotation", std::move(rot)}};
  }
  return j.dump();
}

RecordedFrame frame_from_json_line(const std::string& line) {
  RecordedFrame rec;
  try {
    const json j = json::parse(line);
    for (const auto& [key, _] : j.items()) {
      if (key != "t" && key != "fields" && key != "accel" && key != "gyro" && key != "roll" &&
          key != "pitch" && key != "actuator") {
        throw ConfigError("unknown key '" + key + "' in sensor frame");
      }
    }
    SensorFrame& f = rec.frame;
    f.timestamp = j.at("t").get<double>();
    for (const json& b : j.at("fields")) f.raw_fields.push_back(json_vec(b, "fields"));
    f.imu_accel = json_vec(j.at("accel"), "accel");
    f.imu_gyro = json_vec(j.at("gyro"), "gyro");
    f.imu_roll = j.at("roll").get<double>();
    f.imu_pitch = j.at("pitch").get<double>();
    if (j.contains("actuator")) {
      const json& a = j.at("actuator");
      Pose p;
      p.position = json_vec(a.at("position"), "actuator.position");
      const json& rot = a.at("rotation");
      if (!rot.is_array() || rot.size() != 3) throw ConfigError("actuator.rotation must be 3x3");
      for (int r = 0; r < 3; ++r) p.orientation.row(r) = json_vec(rot[r], "rotation").transpose();
      if (!is_rotation(p.orientation, 1e-6)) throw ConfigError("actuator.rotation is not a rotation");
      rec.actuator_pose = p;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sensor frame: ") + e.what());
  }
  return rec;
}

void write_frames(std::ostream& out, const std::vector<RecordedFrame>& frames) {
  for (const RecordedFrame& f : frames) out << frame_to_json_line(f) << '\n';
}

std::vector<RecordedFrame> read_frames(std::istream& in) {
  std::vector<RecordedFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RecordedFrame rec = frame_from_json_line(line);
    if (!frames.empty()) {
      if (rec.frame.timestamp < frames.back().frame.timestamp) {
        throw ConfigError("sensor frame timestamps must be non-decreasing");
      }
      if (rec.frame.raw_fields.size() != frames.back().frame.raw_fields.size()) {
        throw ConfigError("sensor frames disagree on reading count");
      }
    }
    frames.push_back(std::move(rec));
  }
  return frames;
}

}  // namespace magtee
