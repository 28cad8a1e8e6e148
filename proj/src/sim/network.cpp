#include "bodyrig/sim/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bodyrig/core/error.hpp"

namespace bodyrig::sim {

namespace {
constexpr double kEps = 1e-3;  // bytes
}

Micros deliver_delay(std::uint64_t bytes, Micros latency, double link_bandwidth, double server_nic_bandwidth,
                     std::size_t concurrent_senders, bool link_up) {
  if (!link_up) throw Error(Errc::LinkDown, "link is down");
  if (!(link_bandwidth > 0) || !(server_nic_bandwidth > 0) || concurrent_senders == 0) {
    throw Error(Errc::InvalidArgument, "rates and sender count must be positive");
  }
  const double rate = std::min(link_bandwidth, server_nic_bandwidth / static_cast<double>(concurrent_senders));
  return latency + ceil_seconds(static_cast<double>(bytes) / rate);
}

double FluidPool::rate(int flow) const {
  auto it = flows_.find(flow);
  if (it == flows_.end()) return 0.0;
  return std::min(it->second.link_bandwidth, capacity_ / static_cast<double>(flows_.size()));
}

std::uint64_t FluidPool::backlog(int flow) const {
  auto it = flows_.find(flow);
  if (it == flows_.end()) return 0;
  return it->second.queued + static_cast<std::uint64_t>(std::ceil(std::max(0.0, it->second.remaining)));
}

void FluidPool::advance() {
  const double dt = to_seconds(q_.now() - last_);
  last_ = q_.now();
  if (dt <= 0) return;
  const double share = flows_.empty() ? 0.0 : capacity_ / static_cast<double>(flows_.size());
  for (auto& [id, f] : flows_) f.remaining -= std::min(f.link_bandwidth, share) * dt;
}

void FluidPool::enqueue(int flow, double link_bandwidth, std::uint64_t bytes, Done done) {
  advance();
  auto [it, fresh] = flows_.try_emplace(flow);
  Flow& f = it->second;
  f.link_bandwidth = link_bandwidth;
  if (fresh) {
    f.remaining = static_cast<double>(bytes);
  } else {
    f.queued += bytes;
  }
  f.queue.push_back({bytes, std::move(done)});
  reschedule();
}

void FluidPool::clear(int flow) {
  advance();
  flows_.erase(flow);
  reschedule();
}

void FluidPool::reschedule() {
  ++version_;
  if (flows_.empty()) return;
  double soonest = std::numeric_limits<double>::infinity();
  const double share = capacity_ / static_cast<double>(flows_.size());
  for (const auto& [id, f] : flows_) {
    soonest = std::min(soonest, std::max(0.0, f.remaining) / std::min(f.link_bandwidth, share));
  }
  const std::uint64_t v = version_;
  q_.after(ceil_seconds(soonest), [this, v] { tick(v); });
}

void FluidPool::tick(std::uint64_t version) {
  if (version != version_) return;
  advance();
  std::vector<Done> finished;
  for (auto it = flows_.begin(); it != flows_.end();) {
    Flow& f = it->second;
    if (f.remaining > kEps) {
      ++it;
      continue;
    }
    finished.push_back(std::move(f.queue.front().done));
    f.queue.pop_front();
    if (f.queue.empty()) {
      it = flows_.erase(it);
    } else {
      f.remaining = static_cast<double>(f.queue.front().bytes);
      f.queued -= f.queue.front().bytes;
      ++it;
    }
  }
  reschedule();
  for (auto& d : finished) d();
}

}  // namespace bodyrig::sim
