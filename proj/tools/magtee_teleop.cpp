// Teleoperation service: hosts one live closed-loop session.
//
//   magtee_teleop [--scenario FILE|BUILTIN] [--port N] [--state-rate HZ] [--address IP] [--seed N]

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "magtee/teleop/server.hpp"

using namespace magtee;

int main(int argc, char** argv) {
  CLI::App app{"Live teleoperation session over WebSocket"};
  std::string scenario = "teleop_channel";
  teleop::ServerOptions opts;
  std::optional<std::uint64_t> seed;
  app.add_option("--scenario", scenario, "Tracking scenario JSON file or builtin name")->capture_default_str();
  app.add_option("--port", opts.port, "TCP port (0 picks a free one)")->capture_default_str();
  app.add_option("--state-rate", opts.state_rate, "State broadcast rate [Hz]")->capture_default_str();
  app.add_option("--address", opts.address, "Listen address")->capture_default_str();
  app.add_option("--seed", seed, "Noise seed (default: the scenario's first seed)");
  CLI11_PARSE(app, argc, argv);

  // Signals are taken by a dedicated thread so shutdown goes through stop().
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    const Scenario sc = std::filesystem::exists(scenario) ? load_scenario_file(scenario) : builtin_scenario(scenario);
    teleop::Session session(sc, seed);
    teleop::Server server(session, opts);
    std::printf("session %s (%s) on ws://%s:%u/session, state at %.3g Hz\n", session.id().c_str(),
                sc.name.c_str(), opts.address.c_str(), server.port(), opts.state_rate);
    std::fflush(stdout);
    std::thread([&server, signals] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.stop();
    }).detach();
    server.run();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
