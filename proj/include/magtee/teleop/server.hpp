#pragma once

// HTTP and WebSocket front end of a Session.
//
//   GET /health    liveness and session clock
//   GET /scenario  the scenario in force, as scenario JSON
//   WS  /session   state stream out, commands in, acks and errors out

#include <memory>
#include <string>
#include <thread>

#include "magtee/teleop/session.hpp"

namespace magtee::teleop {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  double state_rate = 20.0;    // Hz
};

class Server {
 public:
  /// Binds the listening socket; throws Error when that fails.
  Server(Session& session, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;

  /// Starts the session loop thread and serves until stop(). Blocks.
  void run();
  /// Thread safe; run() returns soon after.
  void stop();

  struct Impl;  // defined in server.cpp

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace magtee::teleop
