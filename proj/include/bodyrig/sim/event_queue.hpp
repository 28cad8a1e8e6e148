#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "bodyrig/core/time.hpp"

namespace bodyrig::sim {

// Virtual-time scheduler. Events at equal times run in insertion order.
class EventQueue {
 public:
  Micros now() const noexcept { return now_; }

  void at(Micros t, std::function<void()> fn) {
    heap_.push(Item{t < now_ ? now_ : t, seq_++, std::move(fn)});
  }
  void after(Micros d, std::function<void()> fn) { at(now_ + d, std::move(fn)); }

  bool empty() const noexcept { return heap_.empty(); }
  Micros next_time() const { return heap_.top().t; }

  // Runs one event; false when none is left.
  bool step() {
    if (heap_.empty()) return false;
    Item it = heap_.top();
    heap_.pop();
    now_ = it.t;
    it.fn();
    return true;
  }

  // Runs every event up to and including `t`, then sets the clock to `t`.
  void run_until(Micros t) {
    while (!heap_.empty() && heap_.top().t <= t) step();
    if (t > now_) now_ = t;
  }

 private:
  struct Item {
    Micros t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Item& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  Micros now_{0};
  std::uint64_t seq_ = 0;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap_;
};

}  // namespace bodyrig::sim
