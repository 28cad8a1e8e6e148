#include "bodyrig/coordinator/registry.hpp"

#include "bodyrig/core/error.hpp"

namespace bodyrig::coordinator {

std::string_view to_string(NodeState s) noexcept { return s == NodeState::Connected ? "Connected" : "Lost"; }

Registry::Registry(int beams, int slots_per_beam) : beams_(beams), slots_(slots_per_beam) {
  if (beams < 1 || slots_per_beam < 1) throw Error(Errc::InvalidArgument, "rig needs at least one slot");
}

const NodeRecord& Registry::register_node(const protocol::Hello& hello, Micros now) {
  if (hello.node_id.empty()) throw Error(Errc::InvalidArgument, "empty node_id");
  if (hello.beam < 0 || hello.beam >= beams_ || hello.slot < 0 || hello.slot >= slots_) {
    throw Error(Errc::InvalidArgument, "position (" + std::to_string(hello.beam) + "," + std::to_string(hello.slot) +
                                           ") is outside the rig");
  }
  for (const auto& [id, rec] : nodes_) {
    if (id != hello.node_id && rec.state == NodeState::Connected && rec.beam == hello.beam &&
        rec.slot == hello.slot) {
      throw Error(Errc::SlotConflict, id + " already holds (" + std::to_string(hello.beam) + "," +
                                          std::to_string(hello.slot) + ")");
    }
  }
  NodeRecord& rec = nodes_[hello.node_id];
  rec.node_id = hello.node_id;
  rec.beam = hello.beam;
  rec.slot = hello.slot;
  rec.state = NodeState::Connected;
  rec.last_heartbeat = now;
  return rec;
}

void Registry::touch(const std::string& node_id, Micros now) {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) throw Error(Errc::UnknownNode, node_id);
  it->second.last_heartbeat = now;
}

bool Registry::mark_lost(const std::string& node_id) {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end() || it->second.state == NodeState::Lost) return false;
  it->second.state = NodeState::Lost;
  return true;
}

void Registry::record_delivery(const std::string& node_id) {
  auto it = nodes_.find(node_id);
  if (it != nodes_.end()) ++it->second.frames_delivered;
}

const NodeRecord* Registry::find(const std::string& node_id) const {
  auto it = nodes_.find(node_id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::vector<NodeRecord> Registry::nodes() const {
  std::vector<NodeRecord> out;
  out.reserve(nodes_.size());
  for (const auto& [id, rec] : nodes_) out.push_back(rec);
  return out;
}

std::vector<std::string> Registry::connected_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, rec] : nodes_) {
    if (rec.state == NodeState::Connected) out.push_back(id);
  }
  return out;
}

}  // namespace bodyrig::coordinator
