#pragma once

// Wire format of the teleoperation session. Every message is one JSON
// object with a "type" of state, command, ack or error; numbers are SI.
// docs/protocol.md has the full schema.

#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "magtee/closed_loop.hpp"
#include "magtee/control.hpp"
#include "magtee/errors.hpp"

namespace magtee::teleop {

/// Malformed or unknown client message.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

struct PauseCommand {};
struct ResumeCommand {};

struct DisturbCommand {
  Vec3 force = Vec3::Zero();  // N, world frame
  double duration = 0.0;      // s
};

/// Absent entries keep the current diagonal.
struct SetGainsCommand {
  std::optional<Vec3> kp, kd, kpo, kdo;
};

using CommandBody = std::variant<ClinicalCommand, PauseCommand, ResumeCommand, DisturbCommand, SetGainsCommand>;

struct Command {
  nlohmann::json id;  // client supplied, echoed in the ack
  std::string name;   // as sent, e.g. "withdraw"
  CommandBody body;
};

inline constexpr double kMaxDisturbDuration = 5.0;  // s
inline constexpr double kMaxDisturbForce = 5.0;     // N

/// Parses one client text frame. Throws ProtocolError with a reason; when
/// the id could be read it is stored in `id_out` for the error reply.
Command parse_command(const std::string& text, nlohmann::json* id_out = nullptr);

nlohmann::json command_to_json(const Command& c);

/// {"position": [x, y, z], "rotation": row-major 3x3, "euler": [roll, pitch, yaw]}
nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);
/// {"position": [x, y, z], "moment": [mx, my, mz]}
nlohmann::json target_to_json(const ControlTarget& t);
ControlTarget target_from_json(const nlohmann::json& j);

nlohmann::json ack_message(const nlohmann::json& id, long seq, const std::string& command, bool applied,
                           const std::string& reason, double time, bool running, const ControlTarget& target);
nlohmann::json error_message(const nlohmann::json& id, const std::string& reason);

}  // namespace magtee::teleop
