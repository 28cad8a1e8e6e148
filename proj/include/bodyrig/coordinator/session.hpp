#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "bodyrig/core/phase.hpp"
#include "bodyrig/core/time.hpp"
#include "bodyrig/lighting/types.hpp"
#include "json.hpp"

namespace bodyrig::coordinator {

// Declaration order is the monotone progress order.
enum class SessionState {
  Idle,
  LightsSet,
  TextureCapture,
  PatternProject,
  PatternCapture,
  Transferring,
  Complete,
  PartialFailure,
};

std::string_view to_string(SessionState s) noexcept;
bool is_terminal(SessionState s) noexcept;

using FrameKey = std::pair<Phase, std::string>;  // (phase, node_id)

struct SessionDeadlines {
  Micros ack{5'000'000};
  Micros transfer{30'000'000};
  friend bool operator==(const SessionDeadlines&, const SessionDeadlines&) = default;
};

namespace ev {
struct Start {};
struct LightAck {
  std::string node_id;
};
struct CaptureAck {
  std::string node_id;
  Phase phase = Phase::Texture;
  bool ok = true;
};
struct PatternAck {
  std::string node_id;
};
struct FrameReceived {
  std::string node_id;
  Phase phase = Phase::Texture;
};
// Fired by the deadline armed on entry to `state`; ignored once the session
// has moved on.
struct Timeout {
  SessionState state = SessionState::Idle;
};
struct NodeLost {
  std::string node_id;
};
}  // namespace ev

using SessionEvent =
    std::variant<ev::Start, ev::LightAck, ev::CaptureAck, ev::PatternAck, ev::FrameReceived, ev::Timeout, ev::NodeLost>;

std::string_view event_name(const SessionEvent& e) noexcept;

struct CaptureSession {
  std::string session_id;
  SessionState state = SessionState::Idle;
  std::set<std::string> expected;
  // Nodes that failed an ack, missed a deadline or were lost. They get no
  // further commands; frames they already sent still count.
  std::set<std::string> dropped;
  std::set<std::string> light_acked;
  std::set<std::string> texture_acked;
  std::set<std::string> pattern_acked;
  std::set<std::string> pattern_capture_acked;
  std::set<FrameKey> received;
  lighting::PatternSpec pattern;
  lighting::LightLevel light = lighting::LightLevel::Full;
  SessionDeadlines deadlines;
  std::set<FrameKey> missing;  // filled on entering a terminal state

  std::set<std::string> active() const;
  std::size_t expected_frames() const noexcept { return expected.size() * kPhases.size(); }
  std::size_t received_in(Phase p) const;
  friend bool operator==(const CaptureSession&, const CaptureSession&) = default;
};

// Side effects the coordinator carries out after a transition.
struct Effect {
  enum class Kind { SendLights, SendCapture, SendPattern, ArmDeadline, Finished } kind;
  std::vector<std::string> targets;  // fan-out recipients
  Phase phase = Phase::Texture;      // SendCapture
  SessionState state = SessionState::Idle;  // ArmDeadline: the state it guards
  Micros delay{0};                          // ArmDeadline
  friend bool operator==(const Effect&, const Effect&) = default;
};

struct StepResult {
  CaptureSession session;
  std::vector<Effect> effects;
};

// Pure transition function. Throws Error{IllegalEvent} for an event that
// cannot occur in the current state; the input session is untouched.
StepResult session_step(const CaptureSession& s, const SessionEvent& e);

nlohmann::json missing_to_json(const std::set<FrameKey>& missing);

}  // namespace bodyrig::coordinator
