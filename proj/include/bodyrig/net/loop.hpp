#pragma once

#include <poll.h>

#include <chrono>
#include <cstdint>
#include <functional>
#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bodyrig/core/time.hpp"
#include "bodyrig/protocol/codec.hpp"

namespace bodyrig::net {

// Single-threaded poll(2) loop with timers and a thread-safe task queue.
// Everything except post(), call() and stop() must run on the loop thread.
class EventLoop {
 public:
  EventLoop();
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  void run();
  void stop();
  void post(std::function<void()> fn);
  // Runs fn on the loop thread and waits for it, rethrowing what fn threw.
  // Runs inline when already there. Throws Error{Io} when the loop has
  // stopped.
  void call(const std::function<void()>& fn);
  bool on_loop_thread() const noexcept { return std::this_thread::get_id() == owner_.load(); }

  // Monotonic time since the loop was created.
  Micros now() const;
  void after(Micros delay, std::function<void()> fn);

  void watch(int fd, short events, std::function<void(short)> cb);
  void modify(int fd, short events);
  void unwatch(int fd);

 private:
  void drain_tasks();

  std::chrono::steady_clock::time_point epoch_;
  int wake_[2] = {-1, -1};
  std::mutex mu_;
  std::vector<std::function<void()>> tasks_;
  bool stopped_ = false;
  std::atomic<std::thread::id> owner_;
  std::multimap<Micros, std::function<void()>> timers_;
  std::map<int, std::pair<short, std::shared_ptr<std::function<void(short)>>>> fds_;
};

// host:port, port 0 for any. Returns the listening fd and the bound port.
std::pair<int, int> listen_tcp(const std::string& host, int port);
// "host:port" -> (host, port); throws Error{InvalidArgument}.
std::pair<std::string, int> split_address(const std::string& addr);

// Length-prefixed message stream over a non-blocking socket.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  struct Handlers {
    std::function<void(const protocol::Message&)> on_message;
    std::function<void()> on_closed;  // once, after a peer close or error
    std::function<void()> on_writable;  // after the send buffer shrank
    std::function<void()> on_connected;  // outgoing connections only
  };

  // Wraps an accepted socket.
  static std::shared_ptr<Connection> adopt(EventLoop& loop, int fd, Handlers h);
  // Starts a non-blocking connect; on_closed reports failure.
  static std::shared_ptr<Connection> dial(EventLoop& loop, const std::string& addr, Handlers h);

  ~Connection();
  void send(const protocol::Message& m);
  // Closes without calling on_closed.
  void close();
  std::size_t backlog() const noexcept { return out_.size() - out_off_; }
  bool open() const noexcept { return fd_ >= 0; }

 private:
  Connection(EventLoop& loop, int fd, Handlers h, bool connecting);
  void on_event(short revents);
  void fail();
  void flush();
  void update_interest();

  EventLoop& loop_;
  int fd_;
  Handlers h_;
  bool connecting_;
  protocol::FrameReader reader_;
  std::vector<std::uint8_t> out_;
  std::size_t out_off_ = 0;
};

}  // namespace bodyrig::net
