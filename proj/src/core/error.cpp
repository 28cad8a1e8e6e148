#include "bodyrig/core/error.hpp"

namespace bodyrig {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::BodyTooLarge: return "BodyTooLarge";
    case Errc::TruncatedFrame: return "TruncatedFrame";
    case Errc::MalformedBody: return "MalformedBody";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::BackendFailure: return "BackendFailure";
    case Errc::DeadlineExceeded: return "DeadlineExceeded";
    case Errc::LinkDown: return "LinkDown";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::InvalidFrame: return "InvalidFrame";
    case Errc::SlotConflict: return "SlotConflict";
    case Errc::IllegalEvent: return "IllegalEvent";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::PhaseMismatch: return "PhaseMismatch";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ControllerUnreachable: return "ControllerUnreachable";
    case Errc::InfeasibleBudget: return "InfeasibleBudget";
    case Errc::DegenerateCenter: return "DegenerateCenter";
    case Errc::VirtualTimeExhausted: return "VirtualTimeExhausted";
    case Errc::EmptySelection: return "EmptySelection";
    case Errc::SessionActive: return "SessionActive";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NotFound: return "NotFound";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace bodyrig
