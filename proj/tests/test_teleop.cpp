#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "magtee/experiment.hpp"
#include "magtee/teleop/server.hpp"

using namespace magtee;
using namespace magtee::teleop;
using nlohmann::json;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

Vec3 vec(const json& j) { return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>()); }

// Errors recomputed from the poses embedded in a state message.
void expect_self_consistent(const json& state) {
  const Vec3 p_true = vec(state["true"]["position"]);
  const json& r = state["true"]["rotation"];
  const Vec3 z_true(r[2].get<double>(), r[5].get<double>(), r[8].get<double>());
  const Vec3 p_d = vec(state["target"]["position"]);
  const Vec3 m_d = vec(state["target"]["moment"]);
  const Vec3 p_est = vec(state["estimate"]["position"]);
  Mat3 r_true, r_est;
  for (int i = 0; i < 9; ++i) {
    r_true(i / 3, i % 3) = state["true"]["rotation"][i].get<double>();
    r_est(i / 3, i % 3) = state["estimate"]["rotation"][i].get<double>();
  }
  const double cos_rel = std::clamp(((r_est.transpose() * r_true).trace() - 1.0) / 2.0, -1.0, 1.0);
  const json& e = state["errors"];
  EXPECT_NEAR(e["position"].get<double>(), (p_true - p_d).norm(), 1e-9);
  EXPECT_NEAR(e["orientation"].get<double>(), std::atan2(z_true.cross(m_d).norm(), z_true.dot(m_d)), 1e-9);
  EXPECT_NEAR(e["estimate_position"].get<double>(), (p_est - p_true).norm(), 1e-9);
  // acos is ill-conditioned near 0; compare cosines there.
  EXPECT_NEAR(std::cos(e["estimate_orientation"].get<double>()), cos_rel, 1e-9);
}

struct Acks {
  std::vector<json> list;
  Session::Reply sink() {
    return [this](const json& a) { list.push_back(a); };
  }
};

Command cmd(const json& j) { return parse_command(j.dump()); }

Scenario eso() { return builtin_scenario("esophagus_following"); }
Scenario channel() { return builtin_scenario("teleop_channel"); }

}  // namespace

// ---------------------------------------------------------------- protocol

TEST(Protocol, ParsesClinicalCommands) {
  Command c = cmd({{"type", "command"}, {"id", "a"}, {"command", "advance"}, {"amount", 0.01}});
  EXPECT_EQ(c.id, "a");
  auto& adv = std::get<ClinicalCommand>(c.body);
  EXPECT_EQ(adv.kind, CommandKind::advance);
  EXPECT_DOUBLE_EQ(adv.amount, 0.01);

  c = cmd({{"type", "command"}, {"id", 2}, {"command", "withdraw"}, {"amount", 0.01}});
  EXPECT_DOUBLE_EQ(std::get<ClinicalCommand>(c.body).amount, -0.01);
  c = cmd({{"type", "command"}, {"id", 3}, {"command", "retroflex"}, {"amount", 0.1}});
  EXPECT_EQ(std::get<ClinicalCommand>(c.body).kind, CommandKind::anteflex);
  EXPECT_DOUBLE_EQ(std::get<ClinicalCommand>(c.body).amount, -0.1);
  c = cmd({{"type", "command"}, {"id", 4}, {"command", "flex_right"}, {"amount", 0.1}});
  EXPECT_EQ(std::get<ClinicalCommand>(c.body).kind, CommandKind::flex);
  EXPECT_DOUBLE_EQ(std::get<ClinicalCommand>(c.body).amount, -0.1);

  c = cmd({{"type", "command"}, {"id", 5}, {"command", "set_absolute"}, {"position", {0, 0, 0.1}},
           {"moment", {0, 0, -2}}});
  const auto& abs = std::get<ClinicalCommand>(c.body);
  ASSERT_TRUE(abs.absolute.has_value());
  EXPECT_TRUE(abs.absolute->desired_moment_dir.isApprox(-Vec3::UnitZ(), 1e-15));
}

TEST(Protocol, ParsesSessionCommands) {
  EXPECT_TRUE(std::holds_alternative<PauseCommand>(cmd({{"type", "command"}, {"id", 1}, {"command", "pause"}}).body));
  EXPECT_TRUE(
      std::holds_alternative<ResumeCommand>(cmd({{"type", "command"}, {"id", 1}, {"command", "resume"}}).body));
  const Command d =
      cmd({{"type", "command"}, {"id", 1}, {"command", "disturb"}, {"force", {0, 2, 0}}, {"duration", 0.5}});
  EXPECT_EQ(std::get<DisturbCommand>(d.body).force, Vec3(0, 2, 0));
  EXPECT_DOUBLE_EQ(std::get<DisturbCommand>(d.body).duration, 0.5);
  const Command g = cmd({{"type", "command"}, {"id", 1}, {"command", "set_gains"}, {"kp", 50}, {"kd", {1, 2, 3}}});
  const auto& gains = std::get<SetGainsCommand>(g.body);
  EXPECT_EQ(*gains.kp, Vec3::Constant(50.0));
  EXPECT_EQ(*gains.kd, Vec3(1, 2, 3));
  EXPECT_FALSE(gains.kpo.has_value());
}

TEST(Protocol, RejectsBadMessages) {
  const std::vector<std::string> bad = {
      "{not json",
      "[1, 2]",
      R"({"type": "state", "id": 1})",
      R"({"type": "command", "command": "pause"})",
      R"({"type": "command", "id": 1.5, "command": "pause"})",
      R"({"type": "command", "id": 1})",
      R"({"type": "command", "id": 1, "command": "somersault", "amount": 1})",
      R"({"type": "command", "id": 1, "command": "advance"})",
      R"({"type": "command", "id": 1, "command": "advance", "amount": "far"})",
      R"({"type": "command", "id": 1, "command": "advance", "amount": 0.01, "speed": 2})",
      R"({"type": "command", "id": 1, "command": "pause", "amount": 0.01})",
      R"({"type": "command", "id": 1, "command": "disturb", "force": [0, 1, 0], "duration": 0})",
      R"({"type": "command", "id": 1, "command": "disturb", "force": [0, 1, 0], "duration": 10})",
      R"({"type": "command", "id": 1, "command": "disturb", "force": [0, 9, 0], "duration": 1})",
      R"({"type": "command", "id": 1, "command": "disturb", "force": [0, 1], "duration": 1})",
      R"({"type": "command", "id": 1, "command": "set_gains"})",
      R"({"type": "command", "id": 1, "command": "set_absolute", "position": [0, 0, 0.1], "moment": [0, 0, 0]})",
  };
  for (const auto& text : bad) {
    SCOPED_TRACE(text);
    EXPECT_THROW(parse_command(text), ProtocolError);
  }
  json id;
  EXPECT_THROW(parse_command(R"({"type": "command", "id": "x7", "command": "warp"})", &id), ProtocolError);
  EXPECT_EQ(id, "x7");
}

TEST(Protocol, CommandJsonRoundTrip) {
  const std::vector<json> msgs = {
      {{"type", "command"}, {"id", "a"}, {"command", "withdraw"}, {"amount", 0.005}},
      {{"type", "command"}, {"id", 1}, {"command", "set_absolute"}, {"position", {0.0, 0.0, 0.1}}, {"moment", {0.0, 0.0, -1.0}}},
      {{"type", "command"}, {"id", 2}, {"command", "disturb"}, {"force", {0.0, 0.5, 0.0}}, {"duration", 0.2}},
      {{"type", "command"}, {"id", 3}, {"command", "set_gains"}, {"kpo", {0.01, 0.02, 0.03}}},
      {{"type", "command"}, {"id", 4}, {"command", "pause"}},
  };
  for (const json& m : msgs) EXPECT_EQ(command_to_json(cmd(m)), m);
}

TEST(Protocol, PoseJsonRoundTripIsExact) {
  const Pose p = Pose::from_euler(Vec3(0.01, -0.02, 0.1), {0.3, -0.2, 1.1});
  const Pose back = pose_from_json(json::parse(pose_to_json(p).dump()));
  EXPECT_EQ(back.position, p.position);
  EXPECT_EQ(back.orientation, p.orientation);
}

// ----------------------------------------------------------------- session

TEST(Session, NeedsTrackingScenario) {
  EXPECT_THROW(Session(builtin_scenario("spiral_localization")), ConfigError);
}

TEST(Session, AdvanceShiftsTargetAlongProbeX) {
  const Scenario sc = eso();
  Session s(sc);
  const auto& k = std::get<TrackingTrajectory>(sc.trajectory);
  const Centerline cl = Centerline::fit(sc.environment.centerline);
  const Pose start = path_pose(k, &cl, 0.0);
  for (int i = 0; i < 100; ++i) s.step();

  Acks acks;
  s.submit(cmd({{"type", "command"}, {"id", "adv"}, {"command", "advance"}, {"amount", 0.01}}), acks.sink());
  s.step();
  ASSERT_EQ(acks.list.size(), 1u);
  const json& ack = acks.list[0];
  EXPECT_EQ(ack["status"], "applied");
  const Vec3 shift = vec(ack["target"]["position"]) - start.position;
  EXPECT_NEAR((shift - 0.01 * start.x_axis()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((vec(s.state()->snapshot.target.desired_position) - vec(ack["target"]["position"])).norm(), 0.0, 1e-12);

}

TEST(Session, AdvanceErrorDecaysInChannel) {
  Session s(channel());
  for (int i = 0; i < 100; ++i) s.step();
  const Vec3 before = s.state()->snapshot.target.desired_position;
  Acks acks;
  s.submit(cmd({{"type", "command"}, {"id", 1}, {"command", "advance"}, {"amount", 0.01}}), acks.sink());
  s.step();
  ASSERT_EQ(acks.list.size(), 1u);
  EXPECT_NEAR((s.state()->snapshot.target.desired_position - before - Vec3(0.01, 0.0, 0.0)).norm(), 0.0, 1e-12);
  const double e0 = s.state()->snapshot.position_error;
  EXPECT_GT(e0, 0.008);
  for (int i = 0; i < 600; ++i) s.step();
  EXPECT_LT(s.state()->snapshot.position_error, 0.5 * e0);
}

TEST(Session, AcksInArrivalOrderExactlyOnce) {
  Session s(eso());
  Acks acks;
  const std::vector<json> sent = {
      {{"type", "command"}, {"id", "1"}, {"command", "turn"}, {"amount", 0.05}},
      {{"type", "command"}, {"id", 2}, {"command", "advance"}, {"amount", 0.005}},
      {{"type", "command"}, {"id", "3"}, {"command", "set_gains"}, {"kp", 100}},
      {{"type", "command"}, {"id", 4}, {"command", "withdraw"}, {"amount", 0.005}},
  };
  for (const json& m : sent) s.submit(cmd(m), acks.sink());
  for (int i = 0; i < 5; ++i) s.step();
  ASSERT_EQ(acks.list.size(), sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) {
    EXPECT_EQ(acks.list[i]["id"], sent[i]["id"]);
    EXPECT_EQ(acks.list[i]["seq"], static_cast<long>(i + 1));
    EXPECT_EQ(acks.list[i]["status"], "applied");
  }
}

TEST(Session, OversizedCommandIsRejected) {
  Session s(eso());
  const ControlTarget before = s.state()->snapshot.target;
  Acks acks;
  s.submit(cmd({{"type", "command"}, {"id", 9}, {"command", "advance"}, {"amount", 0.1}}), acks.sink());
  s.submit(cmd({{"type", "command"}, {"id", 10}, {"command", "anteflex"}, {"amount", 1.0}}), acks.sink());
  s.submit(cmd({{"type", "command"}, {"id", 11}, {"command", "set_gains"}, {"kp", -1}}), acks.sink());
  s.step();
  ASSERT_EQ(acks.list.size(), 3u);
  EXPECT_EQ(acks.list[0]["status"], "rejected");
  EXPECT_NE(acks.list[0]["reason"].get<std::string>().find("clamp"), std::string::npos);
  EXPECT_EQ(acks.list[1]["status"], "rejected");
  EXPECT_EQ(acks.list[2]["status"], "rejected");
  EXPECT_EQ(vec(acks.list[1]["target"]["position"]), before.desired_position);
  EXPECT_EQ(s.state()->snapshot.target.desired_position, before.desired_position);
}

TEST(Session, PauseFreezesSimulationTime) {
  Session s(eso());
  for (int i = 0; i < 10; ++i) s.step();
  Acks acks;
  s.submit(cmd({{"type", "command"}, {"id", "p"}, {"command", "pause"}}), acks.sink());
  s.step();
  ASSERT_EQ(acks.list.size(), 1u);
  const double frozen = s.state()->snapshot.time;
  EXPECT_FALSE(s.state()->running);
  for (int i = 0; i < 20; ++i) {
    s.step();
    EXPECT_EQ(s.state()->snapshot.time, frozen);
  }
  s.submit(cmd({{"type", "command"}, {"id", "r"}, {"command", "resume"}}), acks.sink());
  s.step();
  ASSERT_EQ(acks.list.size(), 2u);
  EXPECT_EQ(acks.list[0]["time"], acks.list[1]["time"]);
  EXPECT_EQ(acks.list[1]["time"].get<double>(), frozen);
  EXPECT_TRUE(s.state()->running);
  EXPECT_GT(s.state()->snapshot.time, frozen);
}

TEST(Session, CommandsApplyAtControlTicks) {
  Scenario sc = eso();
  sc.control_rate = 50.0;
  Session s(sc);
  const double dt = s.period();
  for (int trial = 0; trial < 3; ++trial) {
    s.step();
    Acks acks;
    s.submit(cmd({{"type", "command"}, {"id", trial}, {"command", "turn"}, {"amount", 0.01}}), acks.sink());
    int steps = 0;
    while (acks.list.empty()) {
      s.step();
      ++steps;
    }
    EXPECT_LE(steps, 2);
    // Applied just before the tick at time + dt, which must be a control tick.
    const double next = acks.list[0]["time"].get<double>() + dt;
    EXPECT_NEAR(std::remainder(next, 1.0 / sc.control_rate), 0.0, 1e-9);
  }
}

TEST(Session, DisturbanceTransientAndRecovery) {
  Session s(channel());
  for (int i = 0; i < 100; ++i) s.step();
  const double before = s.state()->snapshot.position_error;
  Acks acks;
  s.submit(cmd({{"type", "command"}, {"id", "d"}, {"command", "disturb"}, {"force", {0, 0.5, 0}}, {"duration", 0.15}}),
           acks.sink());
  double peak = 0.0;
  for (int i = 0; i < 100; ++i) {
    s.step();
    peak = std::max(peak, s.state()->snapshot.position_error);
  }
  ASSERT_EQ(acks.list.size(), 1u);
  EXPECT_EQ(acks.list[0]["status"], "applied");
  EXPECT_GT(peak, before + 0.02);
  for (int i = 0; i < 800; ++i) s.step();
  EXPECT_LT(s.state()->snapshot.position_error, 0.5 * peak);
}

TEST(Session, StateMessagesAreSelfConsistent) {
  Session s(eso());
  Acks acks;
  for (int i = 0; i < 300; ++i) {
    if (i == 50) s.submit(cmd({{"type", "command"}, {"id", 1}, {"command", "advance"}, {"amount", 0.01}}), acks.sink());
    if (i == 150) s.submit(cmd({{"type", "command"}, {"id", 2}, {"command", "anteflex"}, {"amount", 0.2}}), acks.sink());
    s.step();
    if (i % 10 == 0) expect_self_consistent(json::parse(state_message(*s.state(), i).dump()));
  }
}

// ------------------------------------------------------------------ server

namespace {

struct Running {
  explicit Running(Scenario sc, double rate = 20.0) : session(std::move(sc)) {
    ServerOptions o;
    o.port = 0;
    o.state_rate = rate;
    server = std::make_unique<Server>(session, o);
    thread = std::thread([this] { server->run(); });
  }
  ~Running() {
    server->stop();
    thread.join();
  }
  Session session;
  std::unique_ptr<Server> server;
  std::thread thread;
};

std::pair<int, std::string> http_get(unsigned short port, const std::string& target,
                                     http::verb verb = http::verb::get) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::empty_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  return {static_cast<int>(res.result_int()), res.body()};
}

struct Client {
  explicit Client(unsigned short port) : ws(ioc) {
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws.handshake("127.0.0.1", "/session");
  }
  json read() {
    beast::flat_buffer b;
    ws.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }
  json read_type(const std::string& type) {
    for (;;) {
      json m = read();
      if (m["type"] == type) return m;
    }
  }
  void send(const std::string& text) { ws.write(net::buffer(text)); }
  void send(const json& j) { send(j.dump()); }

  net::io_context ioc;
  websocket::stream<tcp::socket> ws;
};

}  // namespace

TEST(Server, HealthAndScenario) {
  Running r(channel());
  const auto [code, body] = http_get(r.server->port(), "/health");
  EXPECT_EQ(code, 200);
  const json h = json::parse(body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["session"], r.session.id());

  const auto [code2, body2] = http_get(r.server->port(), "/scenario");
  EXPECT_EQ(code2, 200);
  EXPECT_EQ(json::parse(body2), scenario_to_json(r.session.scenario()));
  EXPECT_NO_THROW(scenario_from_json(json::parse(body2)));

  EXPECT_EQ(http_get(r.server->port(), "/nothing").first, 404);
  EXPECT_EQ(http_get(r.server->port(), "/health", http::verb::post).first, 405);
}

TEST(Server, BindFailureIsReported) {
  Running r(channel());
  ServerOptions o;
  o.port = r.server->port();
  Session other(channel());
  EXPECT_THROW(Server(other, o), Error);
}

TEST(Server, StateStreamRate) {
  Running r(channel());
  Client c(r.server->port());
  c.read_type("state");
  const auto t0 = std::chrono::steady_clock::now();
  int n = 0;
  long first_seq = -1, last_seq = -1;
  while (std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10)) {
    const json m = c.read();
    if (m["type"] != "state") continue;
    ++n;
    if (first_seq < 0) first_seq = m["seq"];
    EXPECT_GT(m["seq"].get<long>(), last_seq);
    last_seq = m["seq"];
    expect_self_consistent(m);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = n / secs;
  std::printf("state rate %.2f Hz over %.2f s\n", rate, secs);
  EXPECT_NEAR(rate, 20.0, 2.0);
}

TEST(Server, AdvanceCommandRoundTrip) {
  Running r(channel());
  Client c(r.server->port());
  c.read_type("state");
  c.send(json{{"type", "command"}, {"id", "go"}, {"command", "advance"}, {"amount", 0.01}});
  const json ack = c.read_type("ack");
  EXPECT_EQ(ack["id"], "go");
  EXPECT_EQ(ack["status"], "applied");
  const json next = c.read_type("state");
  EXPECT_NEAR((vec(next["target"]["position"]) - vec(ack["target"]["position"])).norm(), 0.0, 1e-9);
  EXPECT_NEAR((vec(next["target"]["moment"]) - vec(ack["target"]["moment"])).norm(), 0.0, 1e-9);
  const double e0 = next["errors"]["position"];
  const double t0 = next["time"];
  json later;
  do {
    later = c.read_type("state");
  } while (later["time"].get<double>() < t0 + 6.0);
  EXPECT_LT(later["errors"]["position"].get<double>(), 0.5 * e0);
}

TEST(Server, MalformedMessageKeepsConnection) {
  Running r(channel());
  Client c(r.server->port());
  c.send(std::string("{oops"));
  const json err = c.read_type("error");
  EXPECT_FALSE(err["reason"].get<std::string>().empty());
  c.send(json{{"type", "command"}, {"id", 5}, {"command", "warp"}});
  EXPECT_EQ(c.read_type("error")["id"], 5);
  c.send(json{{"type", "command"}, {"id", 6}, {"command", "advance"}, {"amount", 0.2}});
  const json rej = c.read_type("ack");
  EXPECT_EQ(rej["status"], "rejected");
  c.send(json{{"type", "command"}, {"id", 7}, {"command", "pause"}});
  const json ack = c.read_type("ack");
  EXPECT_EQ(ack["id"], 7);
  EXPECT_EQ(ack["status"], "applied");
  EXPECT_EQ(ack["seq"].get<long>(), rej["seq"].get<long>() + 1);
}

TEST(Server, ReconnectKeepsSession) {
  Running r(channel());
  double t_first = 0.0;
  std::string id;
  {
    Client c(r.server->port());
    c.send(json{{"type", "command"}, {"id", 1}, {"command", "advance"}, {"amount", 0.01}});
    const json ack = c.read_type("ack");
    const json s = c.read_type("state");
    id = s["session"];
    t_first = s["time"];
    c.ws.close(websocket::close_code::normal);
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  Client c2(r.server->port());
  const json s = c2.read_type("state");
  EXPECT_EQ(s["session"], id);
  EXPECT_GT(s["time"].get<double>(), t_first);
  const auto [code, body] = http_get(r.server->port(), "/health");
  EXPECT_EQ(json::parse(body)["session"], id);
}
