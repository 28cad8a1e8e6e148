#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "bodyrig/core/time.hpp"
#include "json.hpp"

namespace bodyrig {

struct LogEvent {
  std::uint64_t seq = 0;
  Micros at{0};
  std::string source;  // "coordinator", a node id, or "sim"
  std::string kind;
  nlohmann::json data;

  nlohmann::json to_json() const;
};

// Append-only, ordered record of everything observable about a run. The
// simulator compares these across runs; the operator event stream tails it.
class EventLog {
 public:
  using Listener = std::function<void(const LogEvent&)>;

  void append(Micros at, std::string source, std::string kind, nlohmann::json data = nlohmann::json::object());

  std::vector<LogEvent> snapshot() const;
  std::vector<LogEvent> since(std::uint64_t seq, std::size_t max = SIZE_MAX) const;
  std::uint64_t next_seq() const;
  // Like since(), but blocks up to `timeout` while nothing newer exists.
  std::vector<LogEvent> wait_since(std::uint64_t seq, std::size_t max, std::chrono::milliseconds timeout) const;

  // One JSON object per line, in sequence order.
  std::string to_jsonl() const;

  void set_listener(Listener l);

 private:
  std::vector<LogEvent> since_locked(std::uint64_t seq, std::size_t max) const;

  mutable std::mutex mu_;
  mutable std::condition_variable grown_;
  std::vector<LogEvent> events_;
  Listener listener_;
};

}  // namespace bodyrig
