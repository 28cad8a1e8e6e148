#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>

#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/time.hpp"
#include "bodyrig/sim/event_queue.hpp"

namespace bodyrig::sim {

// Arrival delay of one message: latency plus serialization at the link
// rate or the fair share of the server NIC, whichever is lower. Throws
// Error{LinkDown} when `link_up` is false and Error{InvalidArgument} for
// non-positive rates or no senders.
Micros deliver_delay(std::uint64_t bytes, Micros latency, double link_bandwidth, double server_nic_bandwidth,
                     std::size_t concurrent_senders, bool link_up = true);

// Fluid model of one direction of the server NIC. Every flow (one per
// link) sends its queue in FIFO order at min(link rate, capacity / active
// flows); rates are recomputed whenever a flow starts or drains.
class FluidPool {
 public:
  using Done = std::function<void()>;

  FluidPool(EventQueue& q, double capacity) : q_(q), capacity_(capacity) {}

  // `done` runs when the last byte has left; propagation latency is the
  // caller's business.
  void enqueue(int flow, double link_bandwidth, std::uint64_t bytes, Done done);
  // Drops everything queued on `flow` without running callbacks.
  void clear(int flow);

  std::uint64_t backlog(int flow) const;
  std::size_t active() const noexcept { return flows_.size(); }
  double rate(int flow) const;

 private:
  struct Packet {
    std::uint64_t bytes;
    Done done;
  };
  struct Flow {
    double link_bandwidth = 0;
    double remaining = 0;  // of the head packet
    std::uint64_t queued = 0;  // bytes in packets behind the head
    std::deque<Packet> queue;
  };

  void advance();
  void reschedule();
  void tick(std::uint64_t version);

  EventQueue& q_;
  double capacity_;
  std::map<int, Flow> flows_;  // only flows with queued packets
  Micros last_{0};
  std::uint64_t version_ = 0;
};

}  // namespace bodyrig::sim
