// Coordinator daemon: agent listener plus the operator HTTP API. With
// --sim it serves a simulated cluster instead of real agents.
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "bodyrig/api/http.hpp"
#include "bodyrig/api/sim_backend.hpp"
#include "bodyrig/net/runtime.hpp"
#include "signals.hpp"

using namespace bodyrig;

int main(int argc, char** argv) {
  CLI::App app{"Capture rig coordinator.", "rigd"};
  std::string agents = "0.0.0.0:7100";
  std::string api_addr = "127.0.0.1:7080";
  std::string store = "captures";
  std::size_t sim_nodes = 0;
  std::uint64_t seed = 42;
  int heartbeat_ms = 1000;
  bool verbose = false;
  app.add_option("--agents", agents, "Agent listener host:port")->capture_default_str();
  app.add_option("--api", api_addr, "Operator API host:port")->capture_default_str();
  app.add_option("--store", store, "Capture directory")->capture_default_str();
  app.add_option("--sim", sim_nodes, "Serve a simulated cluster of this many nodes instead of real agents")
      ->check(CLI::Range(1, 96));
  app.add_option("--seed", seed, "Seed of the simulated cluster")->capture_default_str();
  app.add_option("--heartbeat-ms", heartbeat_ms, "Expected agent heartbeat period")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Print every event to stderr");
  CLI11_PARSE(app, argc, argv);

  block_stop_signals();
  try {
    const auto [api_host, api_port] = net::split_address(api_addr);
    std::unique_ptr<api::OperatorBackend> backend;
    EventLog live_log;
    net::EventLoop loop;
    std::unique_ptr<net::CoordinatorServer> server;
    std::vector<std::unique_ptr<lighting::RecordingLightController>> banks;
    std::thread loop_thread;

    if (sim_nodes > 0) {
      sim::ClusterSpec spec;
      spec.node_count = sim_nodes;
      spec.seed = seed;
      auto sb = std::make_unique<api::SimBackend>(spec, store);
      if (verbose) sb->cluster().log().set_listener([](const LogEvent& e) { std::cerr << e.to_json().dump() << '\n'; });
      backend = std::move(sb);
      std::cerr << "rigd: simulated cluster of " << sim_nodes << " nodes\n";
    } else {
      if (verbose) live_log.set_listener([](const LogEvent& e) { std::cerr << e.to_json().dump() << '\n'; });
      coordinator::CoordinatorConfig cfg;
      cfg.store_root = store;
      cfg.heartbeat_period = Micros{heartbeat_ms * 1000LL};
      // No MOSFET driver is wired up; the banks record the requested levels.
      std::vector<lighting::LightController*> lights;
      for (std::size_t i = 0; i < lighting::controllers_for_stripes(static_cast<std::size_t>(cfg.beams)); ++i) {
        banks.push_back(std::make_unique<lighting::RecordingLightController>("mosfet-" + std::to_string(i)));
        lights.push_back(banks.back().get());
      }
      server = std::make_unique<net::CoordinatorServer>(loop, cfg, live_log, lights);
      const auto [host, port] = net::split_address(agents);
      const int bound = server->listen(host, port);
      std::cerr << "rigd: agents on " << host << ":" << bound << '\n';
      backend = std::make_unique<net::LiveBackend>(loop, *server, live_log);
      loop_thread = std::thread([&] { loop.run(); });
    }

    api::ApiServer http(*backend);
    const int bound_api = http.bind(api_host, api_port);
    std::cerr << "rigd: operator API on http://" << api_host << ":" << bound_api << '\n';
    http.start();
    wait_for_signal();
    std::cerr << "rigd: stopping\n";
    http.stop();
    if (loop_thread.joinable()) {
      loop.stop();
      loop_thread.join();
    }
  } catch (const std::exception& e) {
    std::cerr << "rigd: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
