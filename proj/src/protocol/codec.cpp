#include "bodyrig/protocol/codec.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <string>

#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/error.hpp"

namespace bodyrig::protocol {
namespace {

using nlohmann::json;

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::MalformedBody, what); }

// Strict field access: exact JSON types, no implicit conversions, and every
// key of the object must be consumed.
class Fields {
 public:
  explicit Fields(const json& j, const char* where) : j_(j), where_(where) {
    if (!j.is_object()) malformed(std::string(where) + " is not an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) malformed(std::string(where_) + "." + key + " missing");
    ++used_;
    return *it;
  }

  std::string str(const char* key) {
    const json& v = raw(key);
    if (!v.is_string()) malformed(std::string(where_) + "." + key + " not a string");
    return v.get<std::string>();
  }

  std::int64_t i64(const char* key) {
    const json& v = raw(key);
    if (v.is_number_unsigned()) {
      if (v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        malformed(std::string(where_) + "." + key + " out of range");
      }
      return static_cast<std::int64_t>(v.get<std::uint64_t>());
    }
    if (!v.is_number_integer()) malformed(std::string(where_) + "." + key + " not an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t u64(const char* key) {
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    malformed(std::string(where_) + "." + key + " not a non-negative integer");
  }

  std::uint32_t u32(const char* key) {
    const std::uint64_t v = u64(key);
    if (v > std::numeric_limits<std::uint32_t>::max()) malformed(std::string(where_) + "." + key + " out of range");
    return static_cast<std::uint32_t>(v);
  }

  int i32(const char* key) {
    const std::int64_t v = i64(key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      malformed(std::string(where_) + "." + key + " out of range");
    }
    return static_cast<int>(v);
  }

  bool boolean(const char* key) {
    const json& v = raw(key);
    if (!v.is_boolean()) malformed(std::string(where_) + "." + key + " not a boolean");
    return v.get<bool>();
  }

  double number(const char* key) {
    const json& v = raw(key);
    if (!v.is_number()) malformed(std::string(where_) + "." + key + " not a number");
    return v.get<double>();
  }

  Phase phase(const char* key) {
    auto p = phase_from_string(str(key));
    if (!p) malformed(std::string(where_) + "." + key + " unknown phase");
    return *p;
  }

  void done() const {
    if (used_ != j_.size()) malformed(std::string(where_) + " has unexpected keys");
  }

 private:
  const json& j_;
  const char* where_;
  std::size_t used_ = 0;
};

std::optional<AckStep> ack_step_from_string(std::string_view s) {
  if (s == "light") return AckStep::Light;
  if (s == "pattern") return AckStep::Pattern;
  if (s == "capture") return AckStep::Capture;
  if (s == "stored") return AckStep::Stored;
  return std::nullopt;
}

std::optional<MessageKind> kind_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(MessageKind::Error); ++i) {
    if (to_string(static_cast<MessageKind>(i)) == s) return static_cast<MessageKind>(i);
  }
  return std::nullopt;
}

struct PayloadToJson {
  json operator()(const Hello& m) const {
    return {{"node_id", m.node_id}, {"beam", m.beam}, {"slot", m.slot}};
  }
  json operator()(const HelloAck& m) const {
    json j{{"node_id", m.node_id}, {"accepted", m.accepted}};
    if (!m.reason.empty()) j["reason"] = m.reason;
    return j;
  }
  json operator()(const Heartbeat& m) const { return {{"node_id", m.node_id}, {"seq", m.seq}}; }
  json operator()(const CaptureCommand& m) const {
    json j{{"session_id", m.session_id},
           {"phase", to_string(m.phase)},
           {"exposure_deadline_ms", m.exposure_deadline_ms}};
    if (m.pattern_ref) j["pattern_ref"] = pattern_to_json(*m.pattern_ref);
    return j;
  }
  json operator()(const LightCommand& m) const {
    return {{"session_id", m.session_id}, {"level", lighting::percent(m.level)}};
  }
  json operator()(const PatternCommand& m) const {
    return {{"session_id", m.session_id}, {"pattern", pattern_to_json(m.pattern)}};
  }
  json operator()(const CaptureAck& m) const {
    json j{{"session_id", m.session_id}, {"node_id", m.node_id}, {"step", to_string(m.step)}, {"ok", m.ok}};
    if (m.phase) j["phase"] = to_string(*m.phase);
    if (!m.error.empty()) j["error"] = m.error;
    return j;
  }
  json operator()(const FrameHeader& m) const {
    return {{"session_id", m.session_id}, {"node_id", m.node_id},   {"phase", to_string(m.phase)},
            {"width", m.width},           {"height", m.height},     {"byte_size", m.byte_size},
            {"sha256", m.sha256},         {"captured_at_us", m.captured_at_us},
            {"chunk_count", m.chunk_count}};
  }
  json operator()(const FrameChunk& m) const {
    return {{"session_id", m.session_id},
            {"node_id", m.node_id},
            {"phase", to_string(m.phase)},
            {"index", m.index},
            {"data", base64_encode(m.data)}};
  }
  json operator()(const FrameComplete& m) const {
    return {{"session_id", m.session_id}, {"node_id", m.node_id}, {"phase", to_string(m.phase)}};
  }
  json operator()(const FleetCommand& m) const {
    return {{"job_id", m.job_id}, {"command", m.command}, {"timeout_ms", m.timeout_ms}};
  }
  json operator()(const FleetResult& m) const {
    return {{"job_id", m.job_id},         {"node_id", m.node_id},   {"exit_status", m.exit_status},
            {"output", m.output},         {"duration_ms", m.duration_ms}};
  }
  json operator()(const ErrorReport& m) const { return {{"code", m.code}, {"detail", m.detail}}; }
};

Payload payload_from_json(MessageKind kind, const json& j) {
  Fields f(j, "payload");
  Payload out;
  switch (kind) {
    case MessageKind::Hello: {
      Hello m{f.str("node_id"), f.i32("beam"), f.i32("slot")};
      out = std::move(m);
      break;
    }
    case MessageKind::HelloAck: {
      HelloAck m;
      m.node_id = f.str("node_id");
      m.accepted = f.boolean("accepted");
      if (f.has("reason")) m.reason = f.str("reason");
      out = std::move(m);
      break;
    }
    case MessageKind::Heartbeat: {
      Heartbeat m{f.str("node_id"), f.u64("seq")};
      out = std::move(m);
      break;
    }
    case MessageKind::CaptureCommand: {
      CaptureCommand m;
      m.session_id = f.str("session_id");
      m.phase = f.phase("phase");
      m.exposure_deadline_ms = f.i64("exposure_deadline_ms");
      if (f.has("pattern_ref")) m.pattern_ref = pattern_from_json(f.raw("pattern_ref"));
      out = std::move(m);
      break;
    }
    case MessageKind::LightCommand: {
      LightCommand m;
      m.session_id = f.str("session_id");
      auto level = lighting::light_level_from_percent(f.i32("level"));
      if (!level) malformed("LightCommand.level must be 0, 50 or 100");
      m.level = *level;
      out = std::move(m);
      break;
    }
    case MessageKind::PatternCommand: {
      PatternCommand m;
      m.session_id = f.str("session_id");
      m.pattern = pattern_from_json(f.raw("pattern"));
      out = std::move(m);
      break;
    }
    case MessageKind::CaptureAck: {
      CaptureAck m;
      m.session_id = f.str("session_id");
      m.node_id = f.str("node_id");
      auto step = ack_step_from_string(f.str("step"));
      if (!step) malformed("CaptureAck.step unknown");
      m.step = *step;
      m.ok = f.boolean("ok");
      if (f.has("phase")) m.phase = f.phase("phase");
      if (f.has("error")) m.error = f.str("error");
      out = std::move(m);
      break;
    }
    case MessageKind::FrameHeader: {
      FrameHeader m;
      m.session_id = f.str("session_id");
      m.node_id = f.str("node_id");
      m.phase = f.phase("phase");
      m.width = f.u32("width");
      m.height = f.u32("height");
      m.byte_size = f.u64("byte_size");
      m.sha256 = f.str("sha256");
      m.captured_at_us = f.i64("captured_at_us");
      m.chunk_count = f.u32("chunk_count");
      out = std::move(m);
      break;
    }
    case MessageKind::FrameChunk: {
      FrameChunk m;
      m.session_id = f.str("session_id");
      m.node_id = f.str("node_id");
      m.phase = f.phase("phase");
      m.index = f.u32("index");
      auto data = base64_decode(f.str("data"));
      if (!data) malformed("FrameChunk.data is not canonical base64");
      m.data = std::move(*data);
      out = std::move(m);
      break;
    }
    case MessageKind::FrameComplete: {
      FrameComplete m{f.str("session_id"), f.str("node_id"), f.phase("phase")};
      out = std::move(m);
      break;
    }
    case MessageKind::FleetCommand: {
      FleetCommand m{f.str("job_id"), f.str("command"), f.i64("timeout_ms")};
      out = std::move(m);
      break;
    }
    case MessageKind::FleetResult: {
      FleetResult m;
      m.job_id = f.str("job_id");
      m.node_id = f.str("node_id");
      m.exit_status = f.i32("exit_status");
      m.output = f.str("output");
      m.duration_ms = f.i64("duration_ms");
      out = std::move(m);
      break;
    }
    case MessageKind::Error: {
      ErrorReport m{f.str("code"), f.str("detail")};
      out = std::move(m);
      break;
    }
  }
  f.done();
  return out;
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

Message decode_body_plain(std::span<const std::uint8_t> body) {
  json j;
  try {
    j = json::parse(body.begin(), body.end());
  } catch (const json::exception& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

constexpr std::string_view kDataKey = "\"data\"";
constexpr std::size_t kShortcutMin = 1024;

constexpr std::array<bool, 256> kBase64Chars = [] {
  std::array<bool, 256> t{};
  for (int c = 0; c < 256; ++c) {
    t[c] = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/' ||
           c == '=';
  }
  return t;
}();

bool is_base64_char(std::uint8_t c) { return kBase64Chars[c]; }

// Chunk bodies are dominated by one long base64 string, which the JSON lexer
// walks byte by byte. When the body names "data" exactly once and its value
// is plain base64, the value is cut out before parsing and put back after.
// Any other shape goes through the plain parser, so results are identical.
Message decode_body(std::span<const std::uint8_t> body) {
  const std::string_view text(reinterpret_cast<const char*>(body.data()), body.size());
  const auto key = text.find(kDataKey);
  if (key == std::string_view::npos || text.find(kDataKey, key + 1) != std::string_view::npos) {
    return decode_body_plain(body);
  }
  const std::size_t open = key + kDataKey.size() + 1;  // past ':'
  if (open >= text.size() || text[open - 1] != ':' || text[open] != '"') return decode_body_plain(body);
  const auto close = text.find('"', open + 1);
  if (close == std::string_view::npos || close - open - 1 < kShortcutMin) return decode_body_plain(body);
  const std::string_view value = text.substr(open + 1, close - open - 1);
  for (char c : value) {
    if (!is_base64_char(static_cast<std::uint8_t>(c))) return decode_body_plain(body);
  }
  std::string stripped;
  stripped.reserve(text.size() - value.size());
  stripped.append(text.substr(0, open + 1));
  stripped.append(text.substr(close));
  json j;
  try {
    j = json::parse(stripped);
  } catch (const json::exception& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  if (j.is_object()) {
    auto p = j.find("payload");
    if (p != j.end() && p->is_object()) {
      auto d = p->find("data");
      if (d != p->end() && d->is_string()) *d = std::string(value);
    }
  }
  return from_json(j);
}

}  // namespace

json pattern_to_json(const PatternSpec& p) {
  return {{"kind", to_string(p.kind)},
          {"seed", p.seed},
          {"density", p.density},
          {"width", p.width},
          {"height", p.height}};
}

PatternSpec pattern_from_json(const json& j) {
  Fields f(j, "pattern");
  PatternSpec p;
  auto kind = lighting::pattern_kind_from_string(f.str("kind"));
  if (!kind) malformed("pattern.kind unknown");
  p.kind = *kind;
  p.seed = f.u64("seed");
  p.density = f.number("density");
  p.width = f.u32("width");
  p.height = f.u32("height");
  f.done();
  return p;
}

json to_json(const Message& m) {
  return {{"version", m.version},
          {"kind", to_string(m.kind())},
          {"payload", std::visit(PayloadToJson{}, m.payload)}};
}

Message from_json(const json& j) {
  try {
    if (!j.is_object()) malformed("body is not an object");
    // Version is checked before anything else so that a future revision with
    // a different payload shape is reported as such.
    auto vit = j.find("version");
    if (vit == j.end() || !vit->is_number_integer()) malformed("version missing");
    if (vit->get<std::int64_t>() != kVersion) {
      throw Error(Errc::UnsupportedVersion, "version " + vit->dump());
    }
    Fields f(j, "message");
    f.raw("version");
    auto kind = kind_from_string(f.str("kind"));
    if (!kind) malformed("unknown kind");
    Message m;
    m.payload = payload_from_json(*kind, f.raw("payload"));
    f.done();
    validate(m);
    return m;
  } catch (const json::exception& e) {
    malformed(e.what());
  }
}

Bytes encode_message(const Message& m) {
  validate(m);
  std::string body;
  try {
    if (const auto* c = m.get_if<FrameChunk>(); c != nullptr && c->data.size() * 4 / 3 >= kShortcutMin) {
      // Serialize around the payload instead of escaping megabytes of base64
      // (which never needs escaping).
      json j = to_json(Message(FrameChunk{c->session_id, c->node_id, c->phase, c->index, {}}));
      j["payload"]["data"] = "\x01";
      body = j.dump();
      const std::string marker = "\"data\":\"\\u0001\"";
      const auto at = body.find(marker);
      body.replace(at + marker.size() - 7, 6, base64_encode(c->data));
    } else {
      body = to_json(m).dump();
    }
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("not encodable: ") + e.what());
  }
  if (body.size() > kMaxBodyBytes) {
    throw Error(Errc::BodyTooLarge, std::to_string(body.size()) + " bytes");
  }
  const auto n = static_cast<std::uint32_t>(body.size());
  Bytes out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<std::uint8_t>(n >> 24));
  out.push_back(static_cast<std::uint8_t>(n >> 16));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  out.push_back(static_cast<std::uint8_t>(n));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Message decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw Error(Errc::TruncatedFrame, "missing length prefix");
  const std::uint32_t len = read_be32(frame.data());
  if (len > kMaxBodyBytes) malformed("declared length " + std::to_string(len) + " exceeds limit");
  if (frame.size() - 4 < len) {
    throw Error(Errc::TruncatedFrame,
                "prefix promises " + std::to_string(len) + " bytes, have " + std::to_string(frame.size() - 4));
  }
  if (frame.size() - 4 > len) malformed("trailing bytes after frame");
  return decode_body(frame.subspan(4, len));
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  const std::size_t avail = buffer_.size() - offset_;
  if (avail < 4) return std::nullopt;
  const std::uint32_t len = read_be32(buffer_.data() + offset_);
  if (len > kMaxBodyBytes) malformed("declared length " + std::to_string(len) + " exceeds limit");
  if (avail - 4 < len) return std::nullopt;
  const std::span<const std::uint8_t> body(buffer_.data() + offset_ + 4, len);
  offset_ += 4 + len;
  Message m = decode_body(body);
  if (offset_ > (1u << 20) && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  return m;
}

Message detail::decode_message_plain(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw Error(Errc::TruncatedFrame, "missing length prefix");
  const std::uint32_t len = read_be32(frame.data());
  if (len > kMaxBodyBytes) malformed("declared length " + std::to_string(len) + " exceeds limit");
  if (frame.size() - 4 < len) throw Error(Errc::TruncatedFrame, "short frame");
  if (frame.size() - 4 > len) malformed("trailing bytes after frame");
  return decode_body_plain(frame.subspan(4, len));
}

}  // namespace bodyrig::protocol
