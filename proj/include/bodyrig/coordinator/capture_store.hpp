#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bodyrig/coordinator/session.hpp"
#include "bodyrig/core/time.hpp"
#include "bodyrig/protocol/message.hpp"
#include "json.hpp"

namespace bodyrig::coordinator {

struct ManifestRow {
  std::string node_id;
  Phase phase = Phase::Texture;
  std::string path;  // relative to the session directory
  std::uint64_t bytes = 0;
  std::string sha256;
  Micros captured_at{0};
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct SessionMeta {
  std::string session_id;
  Micros started_at{0};
  lighting::LightLevel light = lighting::LightLevel::Full;
  lighting::PatternSpec pattern;
};

nlohmann::json manifest_json(const SessionMeta& meta, const std::vector<ManifestRow>& rows);

// Capture sets on disk:
//   <root>/sessions/<id>/texture/<node>.ppm
//   <root>/sessions/<id>/pattern/<node>.ppm
//   <root>/sessions/<id>/pattern.pgm
//   <root>/sessions/<id>/manifest.json
class CaptureStore {
 public:
  explicit CaptureStore(std::filesystem::path root);

  void open_session(const SessionMeta& meta);

  enum class Outcome { Stored, Duplicate };
  // Verifies size and SHA-256, then writes the file. A second delivery of a
  // stored (node, phase) is reported as Duplicate and not written. Throws
  // Error{ChecksumMismatch}, Error{InvalidFrame}, Error{NotFound} for an
  // unknown session.
  Outcome store_frame(const protocol::FrameHeader& header, std::span<const std::uint8_t> bytes);

  // Rows sorted by (phase, node_id).
  std::vector<ManifestRow> rows(const std::string& session_id) const;
  std::uint64_t total_bytes(const std::string& session_id) const;
  // Writes manifest.json and returns its path.
  std::filesystem::path finalize(const std::string& session_id);

  std::filesystem::path session_dir(const std::string& session_id) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  struct Open {
    SessionMeta meta;
    std::map<FrameKey, ManifestRow> rows;
  };
  const Open& open(const std::string& session_id) const;

  std::filesystem::path root_;
  std::map<std::string, Open> sessions_;
};

struct ManifestCheck {
  std::size_t rows = 0;
  std::size_t verified = 0;
  std::vector<std::string> failures;
  bool ok() const noexcept { return failures.empty() && verified == rows; }
};

// Re-reads every file listed in <session_dir>/manifest.json and recomputes
// its size and checksum.
ManifestCheck verify_manifest(const std::filesystem::path& session_dir);

struct CollectResult {
  CaptureStore::Outcome outcome;
  StepResult step;
};

// Validates a reassembled frame against the session, stores it and feeds
// FrameReceived to the state machine. Throws Error{UnknownNode} for a node
// outside the session, Error{PhaseMismatch} for a frame whose exposure has
// not been commanded, Error{SessionClosed} for a terminal session, plus the
// store errors.
CollectResult collect_frame(const CaptureSession& s, CaptureStore& store, const protocol::FrameHeader& header,
                            std::span<const std::uint8_t> bytes);

}  // namespace bodyrig::coordinator
