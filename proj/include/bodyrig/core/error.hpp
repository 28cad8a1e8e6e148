#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bodyrig {

// Every typed failure raised by the library. The names double as the
// `code` strings carried by protocol Error messages and API responses.
enum class Errc {
  BodyTooLarge,
  TruncatedFrame,
  MalformedBody,
  UnsupportedVersion,
  BackendFailure,
  DeadlineExceeded,
  LinkDown,
  ChecksumMismatch,
  InvalidFrame,
  SlotConflict,
  IllegalEvent,
  UnknownNode,
  PhaseMismatch,
  SessionClosed,
  IndexOutOfRange,
  ControllerUnreachable,
  InfeasibleBudget,
  DegenerateCenter,
  VirtualTimeExhausted,
  EmptySelection,
  SessionActive,
  InvalidArgument,
  NotFound,
  Io,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace bodyrig
