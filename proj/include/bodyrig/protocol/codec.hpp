#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "bodyrig/protocol/message.hpp"
#include "json.hpp"

namespace bodyrig::protocol {

using Bytes = std::vector<std::uint8_t>;

// [u32 big-endian body length][canonical UTF-8 JSON body]
// Throws Error{BodyTooLarge} past kMaxBodyBytes, Error{MalformedBody} when m
// violates a type invariant.
Bytes encode_message(const Message& m);

// Decodes exactly one frame. Throws Error with TruncatedFrame, MalformedBody
// or UnsupportedVersion; never anything else.
Message decode_message(std::span<const std::uint8_t> frame);

// Canonical body for a message (sorted keys, no whitespace).
nlohmann::json to_json(const Message& m);
Message from_json(const nlohmann::json& j);

nlohmann::json pattern_to_json(const PatternSpec& p);
PatternSpec pattern_from_json(const nlohmann::json& j);

// Incremental decoder for a byte stream carrying back-to-back frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete message, or nullopt when more bytes are needed. Throws on
  // a corrupt frame; the stream is unusable afterwards.
  std::optional<Message> next();
  std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

namespace detail {
// decode_message without the large-payload shortcut; the reference the
// shortcut is tested against.
Message decode_message_plain(std::span<const std::uint8_t> frame);
}  // namespace detail

}  // namespace bodyrig::protocol
