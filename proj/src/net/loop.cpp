#include "bodyrig/net/loop.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <future>

#include "bodyrig/core/error.hpp"

namespace bodyrig::net {

namespace {

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(Errc::Io, what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, int port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty() || host == "*" || host == "0.0.0.0") {
    sa.sin_addr.s_addr = htonl(INADDR_ANY);
    return sa;
  }
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::Io, "cannot resolve " + host);
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return sa;
}

}  // namespace

EventLoop::EventLoop() : epoch_(std::chrono::steady_clock::now()), owner_(std::this_thread::get_id()) {
  if (::pipe(wake_) != 0) sys_fail("pipe");
  set_nonblocking(wake_[0]);
  set_nonblocking(wake_[1]);
}

EventLoop::~EventLoop() {
  ::close(wake_[0]);
  ::close(wake_[1]);
}

Micros EventLoop::now() const {
  return std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - epoch_);
}

void EventLoop::post(std::function<void()> fn) {
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    tasks_.push_back(std::move(fn));
  }
  const char b = 1;
  [[maybe_unused]] auto n = ::write(wake_[1], &b, 1);
}

void EventLoop::call(const std::function<void()>& fn) {
  if (on_loop_thread()) {
    fn();
    return;
  }
  auto done = std::make_shared<std::promise<void>>();
  auto fut = done->get_future();
  {
    std::lock_guard lock(mu_);
    if (stopped_) throw Error(Errc::Io, "event loop stopped");
    tasks_.push_back([&fn, done] {
      try {
        fn();
        done->set_value();
      } catch (...) {
        done->set_exception(std::current_exception());
      }
    });
  }
  const char b = 1;
  [[maybe_unused]] auto n = ::write(wake_[1], &b, 1);
  fut.get();
}

void EventLoop::stop() {
  {
    std::lock_guard lock(mu_);
    stopped_ = true;
  }
  const char b = 1;
  [[maybe_unused]] auto n = ::write(wake_[1], &b, 1);
}

void EventLoop::after(Micros delay, std::function<void()> fn) {
  timers_.emplace(now() + std::max(delay, Micros{0}), std::move(fn));
}

void EventLoop::watch(int fd, short events, std::function<void(short)> cb) {
  fds_[fd] = {events, std::make_shared<std::function<void(short)>>(std::move(cb))};
}

void EventLoop::modify(int fd, short events) {
  auto it = fds_.find(fd);
  if (it != fds_.end()) it->second.first = events;
}

void EventLoop::unwatch(int fd) { fds_.erase(fd); }

void EventLoop::drain_tasks() {
  char buf[256];
  while (::read(wake_[0], buf, sizeof buf) > 0) {
  }
  std::vector<std::function<void()>> tasks;
  {
    std::lock_guard lock(mu_);
    tasks.swap(tasks_);
  }
  for (auto& t : tasks) t();
}

void EventLoop::run() {
  owner_ = std::this_thread::get_id();
  std::vector<pollfd> pfds;
  std::vector<std::shared_ptr<std::function<void(short)>>> cbs;
  for (;;) {
    {
      std::lock_guard lock(mu_);
      if (stopped_) break;
    }
    int timeout_ms = 1000;
    if (!timers_.empty()) {
      const auto wait = timers_.begin()->first - now();
      timeout_ms = static_cast<int>(std::clamp<std::int64_t>((wait.count() + 999) / 1000, 0, 1000));
    }
    pfds.clear();
    cbs.clear();
    pfds.push_back({wake_[0], POLLIN, 0});
    cbs.push_back(nullptr);
    for (const auto& [fd, entry] : fds_) {
      pfds.push_back({fd, entry.first, 0});
      cbs.push_back(entry.second);
    }
    const int n = ::poll(pfds.data(), pfds.size(), timeout_ms);
    if (n < 0 && errno != EINTR) sys_fail("poll");
    if (n > 0) {
      if (pfds[0].revents != 0) drain_tasks();
      for (std::size_t i = 1; i < pfds.size(); ++i) {
        if (pfds[i].revents == 0) continue;
        // skip fds unwatched by an earlier callback in this round
        auto it = fds_.find(pfds[i].fd);
        if (it == fds_.end() || it->second.second != cbs[i]) continue;
        (*cbs[i])(pfds[i].revents);
      }
    }
    while (!timers_.empty() && timers_.begin()->first <= now()) {
      auto fn = std::move(timers_.begin()->second);
      timers_.erase(timers_.begin());
      fn();
    }
  }
  // tasks posted before stop still run, so call() never hangs
  drain_tasks();
}

std::pair<std::string, int> split_address(const std::string& addr) {
  std::string a = addr;
  if (auto p = a.find("://"); p != std::string::npos) a = a.substr(p + 3);
  const auto colon = a.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "address needs host:port: " + addr);
  const std::string host = a.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(a.substr(colon + 1), &used);
    if (used != a.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(Errc::InvalidArgument, "bad port in " + addr);
  }
  if (port < 0 || port > 65535) throw Error(Errc::InvalidArgument, "bad port in " + addr);
  return {host, port};
}

std::pair<int, int> listen_tcp(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in sa = resolve(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    const int e = errno;
    ::close(fd);
    errno = e;
    sys_fail("bind " + host + ":" + std::to_string(port));
  }
  if (::listen(fd, 128) != 0) sys_fail("listen");
  socklen_t len = sizeof sa;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
  set_nonblocking(fd);
  return {fd, ntohs(sa.sin_port)};
}

Connection::Connection(EventLoop& loop, int fd, Handlers h, bool connecting)
    : loop_(loop), fd_(fd), h_(std::move(h)), connecting_(connecting) {}

Connection::~Connection() { close(); }

std::shared_ptr<Connection> Connection::adopt(EventLoop& loop, int fd, Handlers h) {
  set_nonblocking(fd);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  std::shared_ptr<Connection> c(new Connection(loop, fd, std::move(h), false));
  std::weak_ptr<Connection> weak = c;
  loop.watch(fd, POLLIN, [weak](short ev) {
    if (auto self = weak.lock()) self->on_event(ev);
  });
  return c;
}

std::shared_ptr<Connection> Connection::dial(EventLoop& loop, const std::string& addr, Handlers h) {
  const auto [host, port] = split_address(addr);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  set_nonblocking(fd);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  sockaddr_in sa = resolve(host, port);
  std::shared_ptr<Connection> c(new Connection(loop, fd, std::move(h), true));
  std::weak_ptr<Connection> weak = c;
  loop.watch(fd, POLLOUT, [weak](short ev) {
    if (auto self = weak.lock()) self->on_event(ev);
  });
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 && errno != EINPROGRESS) {
    // report asynchronously, like a refused non-blocking connect
    loop.post([weak] {
      if (auto self = weak.lock()) self->fail();
    });
  }
  return c;
}

void Connection::close() {
  if (fd_ < 0) return;
  loop_.unwatch(fd_);
  ::close(fd_);
  fd_ = -1;
}

void Connection::fail() {
  if (fd_ < 0) return;
  close();
  if (h_.on_closed) h_.on_closed();
}

void Connection::update_interest() {
  if (fd_ < 0) return;
  loop_.modify(fd_, static_cast<short>(POLLIN | (backlog() > 0 ? POLLOUT : 0)));
}

void Connection::send(const protocol::Message& m) {
  if (fd_ < 0) return;
  const auto bytes = protocol::encode_message(m);
  if (out_off_ > 0 && out_off_ == out_.size()) {
    out_.clear();
    out_off_ = 0;
  }
  out_.insert(out_.end(), bytes.begin(), bytes.end());
  if (!connecting_) flush();
}

void Connection::flush() {
  const std::size_t before = backlog();
  while (fd_ >= 0 && backlog() > 0) {
    const ssize_t n = ::send(fd_, out_.data() + out_off_, backlog(), MSG_NOSIGNAL);
    if (n > 0) {
      out_off_ += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
    if (n < 0 && errno == EINTR) continue;
    fail();
    return;
  }
  if (backlog() == 0) {
    out_.clear();
    out_off_ = 0;
  } else if (out_off_ > (1u << 20)) {
    out_.erase(out_.begin(), out_.begin() + static_cast<std::ptrdiff_t>(out_off_));
    out_off_ = 0;
  }
  update_interest();
  if (backlog() < before && h_.on_writable) {
    auto self = shared_from_this();
    loop_.post([self] {
      if (self->fd_ >= 0 && self->h_.on_writable) self->h_.on_writable();
    });
  }
}

void Connection::on_event(short revents) {
  auto self = shared_from_this();  // callbacks may drop the last owner
  if (connecting_) {
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd_, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0 || (revents & (POLLERR | POLLHUP | POLLNVAL))) {
      fail();
      return;
    }
    connecting_ = false;
    update_interest();
    if (h_.on_connected) h_.on_connected();
    if (fd_ >= 0) flush();
    return;
  }
  if (revents & POLLOUT) flush();
  if (fd_ < 0) return;
  if (revents & (POLLIN | POLLHUP | POLLERR)) {
    std::uint8_t buf[64 * 1024];
    for (;;) {
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n > 0) {
        reader_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        try {
          while (auto m = reader_.next()) {
            if (h_.on_message) h_.on_message(*m);
            if (fd_ < 0) return;
          }
        } catch (const Error&) {
          fail();  // corrupt stream
          return;
        }
        continue;
      }
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
      if (n < 0 && errno == EINTR) continue;
      fail();  // orderly close or error
      return;
    }
  }
  if (revents & POLLNVAL) fail();
}

}  // namespace bodyrig::net
