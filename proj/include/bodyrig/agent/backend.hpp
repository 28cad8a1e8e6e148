#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/phase.hpp"
#include "bodyrig/core/time.hpp"

namespace bodyrig::agent {

struct CaptureRequest {
  std::string session_id;
  std::string node_id;
  Phase phase = Phase::Texture;
  std::optional<std::uint64_t> pattern_seed;
};

struct CapturedImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  Bytes bytes;
  Micros duration{0};  // exposure plus readout
};

class CaptureBackend {
 public:
  virtual ~CaptureBackend() = default;
  // Throws Error{BackendFailure}.
  virtual CapturedImage capture(const CaptureRequest& req) = 0;
};

// 64-bit key of the fields that identify a mock frame.
std::uint64_t mock_frame_seed(const CaptureRequest& req);

// Binary PPM (P6) whose pixel bytes are the little-endian SplitMix64 stream
// seeded with mock_frame_seed(req).
Bytes mock_frame_bytes(const CaptureRequest& req, std::uint32_t width, std::uint32_t height);

class MockCaptureBackend final : public CaptureBackend {
 public:
  MockCaptureBackend(std::uint32_t width = 1920, std::uint32_t height = 1080,
                     Micros duration = Micros{50'000})
      : width_(width), height_(height), duration_(duration) {}

  CapturedImage capture(const CaptureRequest& req) override;

  void set_fault(bool fault) noexcept { fault_ = fault; }
  void set_duration(Micros d) noexcept { duration_ = d; }
  std::size_t captures() const noexcept { return captures_; }

 private:
  std::uint32_t width_;
  std::uint32_t height_;
  Micros duration_;
  bool fault_ = false;
  std::size_t captures_ = 0;
};

// Runs an external still-capture program (raspistill on the real rig).
// `{out}`, `{width}` and `{height}` in the template are substituted; the
// program must write the image to {out}. Not exercised in CI.
class ExternalCaptureBackend final : public CaptureBackend {
 public:
  ExternalCaptureBackend(std::string command_template, std::string scratch_dir,
                         std::uint32_t width = 1920, std::uint32_t height = 1080);

  CapturedImage capture(const CaptureRequest& req) override;

 private:
  std::string template_;
  std::string scratch_dir_;
  std::uint32_t width_;
  std::uint32_t height_;
};

struct CommandResult {
  int exit_status = 0;
  std::string output;
  Micros duration{0};
};

class CommandBackend {
 public:
  virtual ~CommandBackend() = default;
  virtual CommandResult run(const std::string& command) = 0;
};

// Echoes its command. Two forms are interpreted: `sleep <seconds>` takes
// that long, and `fail` exits with status 1. Everything else takes
// `default_duration`.
class MockCommandBackend final : public CommandBackend {
 public:
  explicit MockCommandBackend(Micros default_duration = Micros{200'000})
      : default_duration_(default_duration) {}

  CommandResult run(const std::string& command) override;
  const std::vector<std::string>& history() const noexcept { return history_; }

 private:
  Micros default_duration_;
  std::vector<std::string> history_;
};

// `/bin/sh -c <command>` with stdout and stderr captured.
class ShellCommandBackend final : public CommandBackend {
 public:
  CommandResult run(const std::string& command) override;
};

}  // namespace bodyrig::agent
