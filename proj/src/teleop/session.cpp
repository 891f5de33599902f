#include "magtee/teleop/session.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include "magtee/experiment.hpp"

namespace magtee::teleop {

using nlohmann::json;

namespace {

std::string new_session_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

json state_message(const SessionState& s, long seq) {
  const LoopSnapshot& n = s.snapshot;
  json estimate = pose_to_json(n.estimate.full_pose);
  estimate["moment"] = vec_json(n.estimate.moment_direction());
  estimate["yaw_observable"] = n.estimate.yaw_observable;
  json truth = pose_to_json(n.world.probe_pose);
  truth["linear_velocity"] = vec_json(n.world.linear_velocity);
  json disturbance = nullptr;
  if (n.world.disturbance) {
    disturbance = {{"force", vec_json(n.world.disturbance->force)}, {"expires_at", n.world.disturbance->expires_at}};
  }
  return {{"type", "state"},
          {"seq", seq},
          {"session", s.session_id},
          {"scenario", s.scenario},
          {"running", s.running},
          {"fault", s.fault ? json(*s.fault) : json(nullptr)},
          {"tick", s.tick},
          {"time", n.time},
          {"estimate", estimate},
          {"true", truth},
          {"actuator", pose_to_json(n.world.actuator_pose)},
          {"target", target_to_json(n.target)},
          {"setpoint",
           {{"position", vec_json(n.setpoint.position)},
            {"moment", vec_json(n.setpoint.moment_dir)},
            {"residual", n.setpoint.residual},
            {"infeasible", n.setpoint.infeasible},
            {"fallback", n.setpoint.fallback}}},
          {"disturbance", disturbance},
          {"errors",
           {{"position", n.position_error},
            {"orientation", n.orientation_error},
            {"estimate_position", n.estimate_position_error},
            {"estimate_orientation", n.estimate_orientation_error}}}};
}

Session::Session(Scenario scenario, std::optional<std::uint64_t> seed)
    : scenario_(std::move(scenario)), id_(new_session_id()) {
  scenario_.validate();
  const auto* k = std::get_if<TrackingTrajectory>(&scenario_.trajectory);
  if (!k) throw ConfigError("a teleoperation session needs a tracking scenario");
  const ClosedLoopConfig cfg = scenario_.loop_config(seed.value_or(scenario_.seeds.front()));
  const Centerline* cl = nullptr;
  if (const auto* tube = std::get_if<Tube>(&cfg.environment.kind)) cl = tube->centerline.get();

  WorldState w;
  w.probe_pose = k->initial_probe;
  w.actuator_pose = k->initial_actuator;
  commanded_pose_ = path_pose(*k, cl, 0.0);
  loop_ = std::make_unique<ClosedLoop>(cfg, w, target_from_pose(commanded_pose_));
  publish();
}

void Session::submit(Command command, Reply reply) {
  std::lock_guard lock(queue_mutex_);
  queue_.push_back({std::move(command), std::move(reply)});
}

void Session::drain() {
  std::deque<Pending> batch;
  {
    std::lock_guard lock(queue_mutex_);
    batch.swap(queue_);
  }
  for (const Pending& p : batch) apply(p);
}

void Session::apply(const Pending& p) {
  const Command& c = p.command;
  bool applied = true;
  std::string reason;
  try {
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, ClinicalCommand>) {
            const Pose next = clinical_command_to_pose(commanded_pose_, b);
            loop_->set_target(target_from_pose(next));
            commanded_pose_ = next;
          } else if constexpr (std::is_same_v<T, PauseCommand>) {
            running_ = false;
          } else if constexpr (std::is_same_v<T, ResumeCommand>) {
            if (fault_) throw SimulationFault("session faulted: " + *fault_);
            running_ = true;
          } else if constexpr (std::is_same_v<T, DisturbCommand>) {
            loop_->disturb(b.force, b.duration);
          } else if constexpr (std::is_same_v<T, SetGainsCommand>) {
            const ControlGains& g = loop_->config().controller.gains;
            loop_->set_gains(ControlGains::diagonal(b.kp.value_or(g.kp.diagonal()), b.kd.value_or(g.kd.diagonal()),
                                                    b.kpo.value_or(g.kpo.diagonal()),
                                                    b.kdo.value_or(g.kdo.diagonal())));
          }
        },
        c.body);
  } catch (const ClampError& e) {
    applied = false;
    reason = std::string("clamp: ") + e.what();
  } catch (const Error& e) {
    applied = false;
    reason = e.what();
  }
  const json ack =
      ack_message(c.id, ++ack_seq_, c.name, applied, reason, loop_->latest().time, running_, loop_->target());
  if (p.reply) p.reply(ack);
}

void Session::step() {
  const bool idle = !running_ || fault_.has_value();
  if (idle || loop_->next_tick_controls()) drain();
  if (running_ && !fault_) {
    try {
      loop_->tick();
      ++tick_;
    } catch (const Error& e) {
      fault_ = e.what();
      running_ = false;
    }
  }
  publish();
}

void Session::run(std::stop_token stop) {
  using clock = std::chrono::steady_clock;
  const auto dt = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(period()));
  auto next = clock::now();
  while (!stop.stop_requested()) {
    step();
    next += dt;
    const auto now = clock::now();
    // Running late: drop the backlog rather than bursting to catch up.
    if (now > next + 25 * dt) next = now;
    std::this_thread::sleep_until(next);
  }
}

void Session::publish() {
  auto s = std::make_shared<SessionState>();
  s->session_id = id_;
  s->scenario = scenario_.name;
  s->running = running_;
  s->fault = fault_;
  s->tick = tick_;
  s->snapshot = loop_->latest();
  std::lock_guard lock(state_mutex_);
  state_ = std::move(s);
}

std::shared_ptr<const SessionState> Session::state() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

}  // namespace magtee::teleop
