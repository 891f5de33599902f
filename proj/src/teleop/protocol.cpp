#include "magtee/teleop/protocol.hpp"

#include <cmath>

namespace magtee::teleop {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 read_vec3(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ProtocolError("'" + key + "' must be an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ProtocolError("'" + key + "' must be an array of 3 numbers");
    v[i] = j[i].get<double>();
  }
  if (!v.allFinite()) throw ProtocolError("'" + key + "' must be finite");
  return v;
}

double read_number(const json& msg, const std::string& key) {
  if (!msg.contains(key)) throw ProtocolError("missing '" + key + "'");
  const json& v = msg.at(key);
  if (!v.is_number()) throw ProtocolError("'" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ProtocolError("'" + key + "' must be finite");
  return d;
}

/// A gain entry is either one number for all three axes or three numbers.
Vec3 read_gain(const json& j, const std::string& key) {
  if (j.is_number()) return Vec3::Constant(j.get<double>());
  return read_vec3(j, key);
}

void reject_extra_keys(const json& msg, std::initializer_list<const char*> allowed) {
  for (auto it = msg.begin(); it != msg.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ProtocolError("unexpected key '" + it.key() + "'");
  }
}

ClinicalCommand clinical(const json& msg, const std::string& name) {
  ClinicalCommand c;
  if (name == "set_absolute") {
    reject_extra_keys(msg, {"type", "id", "command", "position", "moment"});
    if (!msg.contains("position") || !msg.contains("moment")) {
      throw ProtocolError("set_absolute needs 'position' and 'moment'");
    }
    ControlTarget t;
    t.desired_position = read_vec3(msg.at("position"), "position");
    const Vec3 m = read_vec3(msg.at("moment"), "moment");
    if (m.norm() < 1e-9) throw ProtocolError("'moment' must be non-zero");
    t.desired_moment_dir = m.normalized();
    c.kind = CommandKind::set_absolute;
    c.absolute = t;
    return c;
  }
  reject_extra_keys(msg, {"type", "id", "command", "amount"});
  double sign = 1.0;
  std::string base = name;
  if (name == "withdraw") base = "advance", sign = -1.0;
  if (name == "retroflex") base = "anteflex", sign = -1.0;
  if (name == "flex_left") base = "flex";
  if (name == "flex_right") base = "flex", sign = -1.0;
  try {
    c.kind = command_kind_from_string(base);
  } catch (const ConfigError&) {
    throw ProtocolError("unknown command '" + name + "'");
  }
  c.amount = sign * read_number(msg, "amount");
  return c;
}

}  // namespace

Command parse_command(const std::string& text, json* id_out) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!msg.is_object()) throw ProtocolError("message must be a JSON object");
  if (msg.contains("id")) {
    const json& id = msg.at("id");
    if (!id.is_string() && !id.is_number_integer()) throw ProtocolError("'id' must be a string or an integer");
    if (id_out) *id_out = id;
  }
  if (!msg.contains("type") || msg.at("type") != "command") {
    throw ProtocolError("only messages of type 'command' are accepted");
  }
  if (!msg.contains("id")) throw ProtocolError("missing 'id'");
  if (!msg.contains("command") || !msg.at("command").is_string()) throw ProtocolError("missing 'command'");

  Command cmd;
  cmd.id = msg.at("id");
  cmd.name = msg.at("command").get<std::string>();
  if (cmd.name == "pause") {
    reject_extra_keys(msg, {"type", "id", "command"});
    cmd.body = PauseCommand{};
  } else if (cmd.name == "resume") {
    reject_extra_keys(msg, {"type", "id", "command"});
    cmd.body = ResumeCommand{};
  } else if (cmd.name == "disturb") {
    reject_extra_keys(msg, {"type", "id", "command", "force", "duration"});
    if (!msg.contains("force")) throw ProtocolError("missing 'force'");
    DisturbCommand d;
    d.force = read_vec3(msg.at("force"), "force");
    d.duration = read_number(msg, "duration");
    if (!(d.duration > 0.0 && d.duration <= kMaxDisturbDuration)) {
      throw ProtocolError("'duration' must be in (0, " + std::to_string(kMaxDisturbDuration) + "] s");
    }
    if (d.force.norm() > kMaxDisturbForce) {
      throw ProtocolError("'force' magnitude must not exceed " + std::to_string(kMaxDisturbForce) + " N");
    }
    cmd.body = d;
  } else if (cmd.name == "set_gains") {
    reject_extra_keys(msg, {"type", "id", "command", "kp", "kd", "kpo", "kdo"});
    SetGainsCommand g;
    if (msg.contains("kp")) g.kp = read_gain(msg.at("kp"), "kp");
    if (msg.contains("kd")) g.kd = read_gain(msg.at("kd"), "kd");
    if (msg.contains("kpo")) g.kpo = read_gain(msg.at("kpo"), "kpo");
    if (msg.contains("kdo")) g.kdo = read_gain(msg.at("kdo"), "kdo");
    if (!g.kp && !g.kd && !g.kpo && !g.kdo) throw ProtocolError("set_gains needs at least one of kp, kd, kpo, kdo");
    cmd.body = g;
  } else {
    cmd.body = clinical(msg, cmd.name);
  }
  return cmd;
}

json command_to_json(const Command& c) {
  json j = {{"type", "command"}, {"id", c.id}, {"command", c.name}};
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ClinicalCommand>) {
          if (b.absolute) {
            j["position"] = vec_json(b.absolute->desired_position);
            j["moment"] = vec_json(b.absolute->desired_moment_dir);
          } else {
            const bool negated = c.name == "withdraw" || c.name == "retroflex" || c.name == "flex_right";
            j["amount"] = negated ? -b.amount : b.amount;
          }
        } else if constexpr (std::is_same_v<T, DisturbCommand>) {
          j["force"] = vec_json(b.force);
          j["duration"] = b.duration;
        } else if constexpr (std::is_same_v<T, SetGainsCommand>) {
          if (b.kp) j["kp"] = vec_json(*b.kp);
          if (b.kd) j["kd"] = vec_json(*b.kd);
          if (b.kpo) j["kpo"] = vec_json(*b.kpo);
          if (b.kdo) j["kdo"] = vec_json(*b.kdo);
        }
      },
      c.body);
  return j;
}

json pose_to_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(p.orientation(i, k));
  }
  json euler = nullptr;
  try {
    const EulerAngles e = p.euler();
    euler = json::array({e.roll, e.pitch, e.yaw});
  } catch (const GimbalError&) {
    // Left null near gimbal lock; the rotation matrix is authoritative.
  }
  return {{"position", vec_json(p.position)}, {"rotation", r}, {"euler", euler}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  p.position = read_vec3(j.at("position"), "position");
  const json& r = j.at("rotation");
  if (!r.is_array() || r.size() != 9) throw ProtocolError("'rotation' must have 9 entries");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) p.orientation(i, k) = r[3 * i + k].get<double>();
  }
  return p;
}

json target_to_json(const ControlTarget& t) {
  return {{"position", vec_json(t.desired_position)}, {"moment", vec_json(t.desired_moment_dir)}};
}

ControlTarget target_from_json(const json& j) {
  ControlTarget t;
  t.desired_position = read_vec3(j.at("position"), "position");
  t.desired_moment_dir = read_vec3(j.at("moment"), "moment");
  return t;
}

json ack_message(const json& id, long seq, const std::string& command, bool applied, const std::string& reason,
                 double time, bool running, const ControlTarget& target) {
  json j = {{"type", "ack"},
            {"id", id},
            {"seq", seq},
            {"command", command},
            {"status", applied ? "applied" : "rejected"},
            {"time", time},
            {"running", running},
            {"target", target_to_json(target)}};
  if (!applied) j["reason"] = reason;
  return j;
}

json error_message(const json& id, const std::string& reason) {
  return {{"type", "error"}, {"id", id}, {"reason", reason}};
}

}  // namespace magtee::teleop
