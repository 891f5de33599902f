#pragma once

// One live closed-loop session. The loop is advanced by step(), either from
// run() on a dedicated thread paced to wall-clock time, or directly by a
// caller (tests). Commands arrive through submit() from any thread and are
// applied in arrival order at the next control tick; readers get immutable
// snapshots through state().

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>

#include <json.hpp>

#include "magtee/closed_loop.hpp"
#include "magtee/scenario.hpp"
#include "magtee/teleop/protocol.hpp"

namespace magtee::teleop {

struct SessionState {
  std::string session_id;
  std::string scenario;
  bool running = true;
  std::optional<std::string> fault;
  long tick = 0;
  LoopSnapshot snapshot;
};

/// State message; `seq` numbers the broadcast.
nlohmann::json state_message(const SessionState& s, long seq);

class Session {
 public:
  using Reply = std::function<void(const nlohmann::json&)>;

  /// Needs a tracking scenario. Its initial poses, environment and
  /// controller are used; the scripted path, pushes and holds are not, the
  /// operator drives the target from the path pose at t = 0.
  explicit Session(Scenario scenario, std::optional<std::uint64_t> seed = std::nullopt);

  const std::string& id() const { return id_; }
  const Scenario& scenario() const { return scenario_; }
  double period() const { return 1.0 / scenario_.estimator_rate; }

  /// Thread safe. `reply` receives the ack once the command is applied.
  void submit(Command command, Reply reply);

  /// Advances one estimator period, or only applies queued commands while
  /// paused or faulted. A module fault pauses the session and is reported
  /// in the state.
  void step();

  /// Calls step() at the estimator rate until stop is requested.
  void run(std::stop_token stop);

  /// Thread safe.
  std::shared_ptr<const SessionState> state() const;

 private:
  struct Pending {
    Command command;
    Reply reply;
  };

  void drain();
  void apply(const Pending& p);
  void publish();

  Scenario scenario_;
  std::string id_;
  std::unique_ptr<ClosedLoop> loop_;
  Pose commanded_pose_;
  bool running_ = true;
  std::optional<std::string> fault_;
  long tick_ = 0;
  long ack_seq_ = 0;

  mutable std::mutex queue_mutex_;
  std::deque<Pending> queue_;
  mutable std::mutex state_mutex_;
  std::shared_ptr<const SessionState> state_;
};

}  // namespace magtee::teleop
