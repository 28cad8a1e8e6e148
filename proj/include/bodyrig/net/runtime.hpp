#pragma once

#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "bodyrig/agent/node_agent.hpp"
#include "bodyrig/api/operator.hpp"
#include "bodyrig/coordinator/coordinator.hpp"
#include "bodyrig/core/event_log.hpp"
#include "bodyrig/net/loop.hpp"

namespace bodyrig::net {

// Coordinator over TCP. Owns the listening socket and one Connection per
// accepted peer; everything runs on `loop`.
class CoordinatorServer final : public coordinator::CoordinatorContext {
 public:
  CoordinatorServer(EventLoop& loop, coordinator::CoordinatorConfig cfg, EventLog& log,
                    std::vector<lighting::LightController*> lights = {});
  ~CoordinatorServer() override;

  // Binds, starts accepting and starts the coordinator. Returns the port.
  int listen(const std::string& host, int port);

  Micros now() const override { return loop_.now(); }
  void send(coordinator::ConnId conn, const protocol::Message& m) override;
  void close(coordinator::ConnId conn) override;
  void schedule(Micros delay, std::function<void()> fn) override;

  coordinator::Coordinator& coordinator() noexcept { return *coord_; }
  std::size_t connections() const noexcept { return conns_.size(); }

 private:
  void accept_ready();

  EventLoop& loop_;
  std::unique_ptr<coordinator::Coordinator> coord_;
  int listen_fd_ = -1;
  std::map<coordinator::ConnId, std::shared_ptr<Connection>> conns_;
  coordinator::ConnId next_conn_ = 1;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

// One camera node's process: a NodeAgent on a TCP connection.
class AgentHost final : public agent::AgentContext {
 public:
  // `log` may be null; events then go nowhere.
  AgentHost(EventLoop& loop, agent::AgentConfig cfg, agent::AgentBackends backends, EventLog* log = nullptr);
  ~AgentHost() override;

  void start();
  agent::NodeAgent& agent() noexcept { return *agent_; }

  Micros now() const override { return loop_.now(); }
  void connect() override;
  void disconnect() override;
  void send(const protocol::Message& m) override;
  std::size_t send_backlog() const override;
  void schedule(Micros delay, std::function<void()> fn) override;
  Micros modeled(Micros) const override { return Micros{0}; }
  // Runs the command on a worker thread. A backend that reports a longer
  // duration than it took (the mock) is held back until that much time
  // has passed, so both backends look alike to the coordinator.
  void run_command(agent::CommandBackend& backend, std::string command,
                   std::function<void(agent::CommandResult)> done) override;
  void log(std::string_view kind, nlohmann::json data) override;

 private:
  EventLoop& loop_;
  std::string addr_;
  std::string node_id_;
  EventLog* log_;
  std::unique_ptr<agent::NodeAgent> agent_;
  std::shared_ptr<Connection> conn_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
  std::vector<std::thread> workers_;
};

// Operator API over a CoordinatorServer; requests hop onto the loop thread.
class LiveBackend final : public api::CoordinatorBackend {
 public:
  LiveBackend(EventLoop& loop, CoordinatorServer& server, const EventLog& log);
};

}  // namespace bodyrig::net
