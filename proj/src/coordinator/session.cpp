#include "bodyrig/coordinator/session.hpp"

#include <algorithm>

#include "bodyrig/core/error.hpp"

namespace bodyrig::coordinator {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

[[noreturn]] void illegal(const CaptureSession& s, const SessionEvent& e) {
  throw Error(Errc::IllegalEvent,
              std::string(event_name(e)) + " in state " + std::string(to_string(s.state)));
}

bool covers(const std::set<std::string>& acked, const std::set<std::string>& active) {
  return std::includes(acked.begin(), acked.end(), active.begin(), active.end());
}

bool all_frames_in(const CaptureSession& s) {
  for (const auto& n : s.active()) {
    for (Phase p : kPhases) {
      if (!s.received.contains({p, n})) return false;
    }
  }
  return true;
}

class Stepper {
 public:
  explicit Stepper(const CaptureSession& s) : s_(s) {}

  StepResult run(const SessionEvent& e) {
    if (is_terminal(s_.state)) return {s_, {}};
    std::visit(overloaded{
                   [&](const ev::Start&) { start(e); },
                   [&](const ev::LightAck& a) { light_ack(a, e); },
                   [&](const ev::CaptureAck& a) { capture_ack(a, e); },
                   [&](const ev::PatternAck& a) { pattern_ack(a, e); },
                   [&](const ev::FrameReceived& f) { frame(f, e); },
                   [&](const ev::Timeout& t) { timeout(t, e); },
                   [&](const ev::NodeLost& l) { lost(l, e); },
               },
               e);
    return {std::move(s_), std::move(effects_)};
  }

 private:
  bool in(SessionState a) const { return s_.state == a; }
  bool before(SessionState a) const { return s_.state < a; }

  void require_expected(const std::string& node) const {
    if (!s_.expected.contains(node)) throw Error(Errc::UnknownNode, node + " is not part of " + s_.session_id);
  }

  void start(const SessionEvent& e) {
    if (!in(SessionState::Idle)) illegal(s_, e);
    enter(SessionState::LightsSet);
  }

  void light_ack(const ev::LightAck& a, const SessionEvent& e) {
    if (before(SessionState::LightsSet)) illegal(s_, e);
    require_expected(a.node_id);
    if (in(SessionState::LightsSet)) s_.light_acked.insert(a.node_id);
    advance();
  }

  void capture_ack(const ev::CaptureAck& a, const SessionEvent& e) {
    const SessionState owner = a.phase == Phase::Texture ? SessionState::TextureCapture : SessionState::PatternCapture;
    if (before(owner)) illegal(s_, e);
    require_expected(a.node_id);
    if (in(owner)) {
      auto& acked = a.phase == Phase::Texture ? s_.texture_acked : s_.pattern_capture_acked;
      if (a.ok) {
        acked.insert(a.node_id);
      } else {
        s_.dropped.insert(a.node_id);
      }
    }
    advance();
  }

  void pattern_ack(const ev::PatternAck& a, const SessionEvent& e) {
    if (before(SessionState::PatternProject)) illegal(s_, e);
    require_expected(a.node_id);
    if (in(SessionState::PatternProject)) s_.pattern_acked.insert(a.node_id);
    advance();
  }

  void frame(const ev::FrameReceived& f, const SessionEvent& e) {
    // A frame can only exist once its exposure was commanded.
    const SessionState first = f.phase == Phase::Texture ? SessionState::TextureCapture : SessionState::PatternCapture;
    if (before(first)) illegal(s_, e);
    require_expected(f.node_id);
    s_.received.insert({f.phase, f.node_id});
    advance();
  }

  void timeout(const ev::Timeout& t, const SessionEvent& e) {
    if (in(SessionState::Idle)) illegal(s_, e);
    if (t.state != s_.state) return;  // stale
    if (in(SessionState::Transferring)) {
      finish();
      return;
    }
    const std::set<std::string>* acked = barrier();
    for (const auto& n : s_.active()) {
      if (!acked->contains(n)) s_.dropped.insert(n);
    }
    advance();
  }

  void lost(const ev::NodeLost& l, const SessionEvent& e) {
    if (in(SessionState::Idle)) illegal(s_, e);
    if (!s_.expected.contains(l.node_id)) return;
    s_.dropped.insert(l.node_id);
    advance();
  }

  const std::set<std::string>* barrier() const {
    switch (s_.state) {
      case SessionState::LightsSet:
        return &s_.light_acked;
      case SessionState::TextureCapture:
        return &s_.texture_acked;
      case SessionState::PatternProject:
        return &s_.pattern_acked;
      case SessionState::PatternCapture:
        return &s_.pattern_capture_acked;
      default:
        return nullptr;
    }
  }

  // Follows every transition whose condition already holds.
  void advance() {
    while (!is_terminal(s_.state)) {
      if (in(SessionState::Transferring)) {
        if (all_frames_in(s_)) finish();
        return;
      }
      if (!covers(*barrier(), s_.active())) return;
      enter(static_cast<SessionState>(static_cast<int>(s_.state) + 1));
    }
  }

  void enter(SessionState next) {
    s_.state = next;
    if (next == SessionState::LightsSet && s_.expected.empty()) {
      finish();
      return;
    }
    const auto targets = s_.active();
    const std::vector<std::string> to(targets.begin(), targets.end());
    switch (next) {
      case SessionState::LightsSet:
        effects_.push_back({Effect::Kind::SendLights, to});
        break;
      case SessionState::TextureCapture:
        effects_.push_back({Effect::Kind::SendCapture, to, Phase::Texture});
        break;
      case SessionState::PatternProject:
        effects_.push_back({Effect::Kind::SendPattern, to});
        break;
      case SessionState::PatternCapture:
        effects_.push_back({Effect::Kind::SendCapture, to, Phase::Pattern});
        break;
      default:
        break;
    }
    const Micros d = next == SessionState::Transferring ? s_.deadlines.transfer : s_.deadlines.ack;
    effects_.push_back({Effect::Kind::ArmDeadline, {}, Phase::Texture, next, d});
  }

  void finish() {
    s_.missing.clear();
    for (const auto& n : s_.expected) {
      for (Phase p : kPhases) {
        if (!s_.received.contains({p, n})) s_.missing.insert({p, n});
      }
    }
    s_.state = s_.missing.empty() ? SessionState::Complete : SessionState::PartialFailure;
    effects_.push_back({Effect::Kind::Finished, {}});
  }

  CaptureSession s_;
  std::vector<Effect> effects_;
};

}  // namespace

std::string_view to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::Idle:
      return "Idle";
    case SessionState::LightsSet:
      return "LightsSet";
    case SessionState::TextureCapture:
      return "TextureCapture";
    case SessionState::PatternProject:
      return "PatternProject";
    case SessionState::PatternCapture:
      return "PatternCapture";
    case SessionState::Transferring:
      return "Transferring";
    case SessionState::Complete:
      return "Complete";
    case SessionState::PartialFailure:
      return "PartialFailure";
  }
  return "?";
}

bool is_terminal(SessionState s) noexcept {
  return s == SessionState::Complete || s == SessionState::PartialFailure;
}

std::string_view event_name(const SessionEvent& e) noexcept {
  static constexpr std::string_view names[] = {"Start",         "LightAck", "CaptureAck", "PatternAck",
                                               "FrameReceived", "Timeout",  "NodeLost"};
  return names[e.index()];
}

std::set<std::string> CaptureSession::active() const {
  std::set<std::string> out;
  std::set_difference(expected.begin(), expected.end(), dropped.begin(), dropped.end(),
                      std::inserter(out, out.end()));
  return out;
}

std::size_t CaptureSession::received_in(Phase p) const {
  return static_cast<std::size_t>(
      std::count_if(received.begin(), received.end(), [p](const FrameKey& k) { return k.first == p; }));
}

StepResult session_step(const CaptureSession& s, const SessionEvent& e) { return Stepper(s).run(e); }

nlohmann::json missing_to_json(const std::set<FrameKey>& missing) {
  auto out = nlohmann::json::array();
  for (const auto& [phase, node] : missing) out.push_back({{"phase", to_string(phase)}, {"node_id", node}});
  return out;
}

}  // namespace bodyrig::coordinator
