#include "bodyrig/net/runtime.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>

namespace bodyrig::net {

CoordinatorServer::CoordinatorServer(EventLoop& loop, coordinator::CoordinatorConfig cfg, EventLog& log,
                                     std::vector<lighting::LightController*> lights)
    : loop_(loop), coord_(std::make_unique<coordinator::Coordinator>(std::move(cfg), *this, log, std::move(lights))) {}

CoordinatorServer::~CoordinatorServer() {
  *alive_ = false;
  for (auto& [id, c] : conns_) c->close();
  if (listen_fd_ >= 0) {
    loop_.unwatch(listen_fd_);
    ::close(listen_fd_);
  }
}

int CoordinatorServer::listen(const std::string& host, int port) {
  const auto [fd, bound] = listen_tcp(host, port);
  listen_fd_ = fd;
  loop_.watch(fd, POLLIN, [this](short) { accept_ready(); });
  coord_->start();
  return bound;
}

void CoordinatorServer::accept_ready() {
  for (;;) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;  // EAGAIN, or a transient accept error
    }
    const coordinator::ConnId id = next_conn_++;
    Connection::Handlers h;
    h.on_message = [this, id](const protocol::Message& m) { coord_->on_message(id, m); };
    h.on_closed = [this, id] {
      conns_.erase(id);
      coord_->on_closed(id);
    };
    conns_[id] = Connection::adopt(loop_, fd, std::move(h));
    coord_->on_open(id);
  }
}

void CoordinatorServer::send(coordinator::ConnId conn, const protocol::Message& m) {
  auto it = conns_.find(conn);
  if (it != conns_.end()) it->second->send(m);
}

void CoordinatorServer::close(coordinator::ConnId conn) {
  auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  it->second->close();
  conns_.erase(it);
}

void CoordinatorServer::schedule(Micros delay, std::function<void()> fn) {
  loop_.after(delay, [alive = alive_, fn = std::move(fn)] {
    if (*alive) fn();
  });
}

AgentHost::AgentHost(EventLoop& loop, agent::AgentConfig cfg, agent::AgentBackends backends, EventLog* log)
    : loop_(loop), addr_(cfg.coordinator_addr), node_id_(cfg.node_id), log_(log) {
  agent_ = std::make_unique<agent::NodeAgent>(std::move(cfg), backends, *this);
}

AgentHost::~AgentHost() {
  *alive_ = false;
  if (conn_) conn_->close();
  for (auto& t : workers_) t.join();
}

void AgentHost::start() { agent_->start(); }

void AgentHost::connect() {
  if (conn_) conn_->close();
  auto alive = alive_;
  Connection::Handlers h;
  h.on_message = [this, alive](const protocol::Message& m) {
    if (*alive) agent_->on_message(m);
  };
  h.on_connected = [this, alive] {
    if (*alive) agent_->on_connected();
  };
  h.on_writable = [this, alive] {
    if (*alive) agent_->on_writable();
  };
  // on_closed covers both a failed connect and a dropped link; the agent
  // knows which from its own state.
  h.on_closed = [this, alive] {
    if (!*alive) return;
    conn_.reset();
    if (agent_->link() == agent::NodeAgent::Link::Connecting) {
      agent_->on_connect_failed();
    } else {
      agent_->on_disconnected();
    }
  };
  try {
    conn_ = Connection::dial(loop_, addr_, std::move(h));
  } catch (const Error&) {
    conn_.reset();
    loop_.post([this, alive] {
      if (*alive) agent_->on_connect_failed();
    });
  }
}

void AgentHost::disconnect() {
  if (!conn_) return;
  conn_->close();
  conn_.reset();
}

void AgentHost::send(const protocol::Message& m) {
  if (conn_) conn_->send(m);
}

std::size_t AgentHost::send_backlog() const { return conn_ ? conn_->backlog() : 0; }

void AgentHost::schedule(Micros delay, std::function<void()> fn) {
  loop_.after(delay, [alive = alive_, fn = std::move(fn)] {
    if (*alive) fn();
  });
}

void AgentHost::run_command(agent::CommandBackend& backend, std::string command,
                            std::function<void(agent::CommandResult)> done) {
  const Micros began = loop_.now();
  workers_.emplace_back([this, &backend, command = std::move(command), done = std::move(done), began,
                         alive = alive_]() mutable {
    agent::CommandResult r;
    try {
      r = backend.run(command);
    } catch (const std::exception& e) {
      r.exit_status = 127;
      r.output = e.what();
    }
    loop_.post([this, r = std::move(r), done = std::move(done), began, alive]() mutable {
      if (!*alive) return;
      const Micros left = began + r.duration - loop_.now();
      if (left > Micros{0}) {
        schedule(left, [r = std::move(r), done = std::move(done)] { done(r); });
      } else {
        done(r);
      }
    });
  });
}

void AgentHost::log(std::string_view kind, nlohmann::json data) {
  if (log_) log_->append(now(), node_id_, std::string(kind), std::move(data));
}

LiveBackend::LiveBackend(EventLoop& loop, CoordinatorServer& server, const EventLog& log)
    : CoordinatorBackend(server.coordinator(), log, [&loop](const std::function<void()>& fn) { loop.call(fn); }) {}

}  // namespace bodyrig::net
