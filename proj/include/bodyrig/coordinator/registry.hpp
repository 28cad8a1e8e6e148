#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bodyrig/core/time.hpp"
#include "bodyrig/protocol/message.hpp"

namespace bodyrig::coordinator {

enum class NodeState { Connected, Lost };

std::string_view to_string(NodeState s) noexcept;

struct NodeRecord {
  std::string node_id;
  int beam = 0;
  int slot = 0;
  NodeState state = NodeState::Connected;
  Micros last_heartbeat{0};
  std::uint64_t frames_delivered = 0;
};

// Known nodes by id. (beam, slot) is unique among connected nodes; lost
// nodes keep their record so counters survive a reconnect.
class Registry {
 public:
  explicit Registry(int beams = 24, int slots_per_beam = 4);

  // Throws Error{SlotConflict} when another connected node holds the
  // position and Error{InvalidArgument} for a position outside the rig.
  const NodeRecord& register_node(const protocol::Hello& hello, Micros now);

  // Any sign of life. Throws Error{UnknownNode}.
  void touch(const std::string& node_id, Micros now);
  // Returns false when the node was already lost or is unknown.
  bool mark_lost(const std::string& node_id);
  void record_delivery(const std::string& node_id);

  const NodeRecord* find(const std::string& node_id) const;
  // Sorted by node_id.
  std::vector<NodeRecord> nodes() const;
  std::vector<std::string> connected_ids() const;
  std::size_t size() const noexcept { return nodes_.size(); }
  int beams() const noexcept { return beams_; }
  int slots_per_beam() const noexcept { return slots_; }

 private:
  int beams_;
  int slots_;
  std::map<std::string, NodeRecord> nodes_;
};

}  // namespace bodyrig::coordinator
