#include "bodyrig/core/event_log.hpp"

#include <algorithm>

namespace bodyrig {

nlohmann::json LogEvent::to_json() const {
  return {{"seq", seq}, {"at_us", at.count()}, {"source", source}, {"kind", kind}, {"data", data}};
}

void EventLog::append(Micros at, std::string source, std::string kind, nlohmann::json data) {
  Listener l;
  LogEvent copy;
  {
    std::lock_guard lock(mu_);
    events_.push_back({events_.size(), at, std::move(source), std::move(kind), std::move(data)});
    if (listener_) {
      l = listener_;
      copy = events_.back();
    }
  }
  grown_.notify_all();
  if (l) l(copy);
}

std::vector<LogEvent> EventLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<LogEvent> EventLog::since(std::uint64_t seq, std::size_t max) const {
  std::lock_guard lock(mu_);
  return since_locked(seq, max);
}

std::vector<LogEvent> EventLog::wait_since(std::uint64_t seq, std::size_t max, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  grown_.wait_for(lock, timeout, [&] { return events_.size() > seq; });
  return since_locked(seq, max);
}

std::vector<LogEvent> EventLog::since_locked(std::uint64_t seq, std::size_t max) const {
  std::vector<LogEvent> out;
  for (std::size_t i = static_cast<std::size_t>(std::min<std::uint64_t>(seq, events_.size()));
       i < events_.size() && out.size() < max; ++i) {
    out.push_back(events_[i]);
  }
  return out;
}

std::uint64_t EventLog::next_seq() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::string EventLog::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : events_) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

void EventLog::set_listener(Listener l) {
  std::lock_guard lock(mu_);
  listener_ = std::move(l);
}

}  // namespace bodyrig
