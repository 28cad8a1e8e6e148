#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include "bodyrig/api/operator.hpp"
#include "json.hpp"

namespace bodyrig::api {

// Serves the operator API over HTTP/1.1. GET /events streams JSON lines;
// with follow=1 (the default) it stays open and pushes new events as they
// are logged, with follow=0 it returns what is there and closes.
class ApiServer {
 public:
  explicit ApiServer(OperatorBackend& backend);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 picks a free one. Returns the bound port; throws Error{Io}.
  int bind(const std::string& host, int port);
  // Serves on a background thread until stop().
  void start();
  // Serves on the calling thread until stop() from elsewhere.
  void serve();
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

// Non-2xx answer from the coordinator.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), status_(status), code_(std::move(code)), detail_(detail) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  int status_;
  std::string code_;
  std::string detail_;
};

// No HTTP conversation was possible.
class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "host:port" or "http://host:port".
class ApiClient {
 public:
  explicit ApiClient(const std::string& address, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ApiClient();
  ApiClient(const ApiClient&) = delete;
  ApiClient& operator=(const ApiClient&) = delete;

  nlohmann::json get(const std::string& path);
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  // Reads GET /events?from=<from>&follow=<follow> line by line. `on_event`
  // returns false to stop early. Returns the seq after the last event seen.
  std::uint64_t events(std::uint64_t from, bool follow, const std::function<bool(const nlohmann::json&)>& on_event);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bodyrig::api
