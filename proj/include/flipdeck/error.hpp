#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flipdeck {

// Machine-readable error codes shared by every module. The gateway maps
// them onto HTTP statuses; the names are part of the wire format.
enum class ErrorCode {
    UnknownLabel,
    UnknownItem,
    InvalidQuestion,
    PhaseViolation,
    AlreadyVoted,
    DeadlineExpired,
    VoteRequired,
    InvalidVote,
    InvalidSubmission,
    Unauthorized,
    Unauthenticated,
    AlreadyDecided,
    NotFound,
    BadParams,
    OutOfRange,
    EmptyInput,
    EmptyBank,
    UnknownCue,
    ArityMismatch,
    ProviderError,
    StorageFailure,
    CorruptRecord,
    NegativeLatency,
    BadRequest,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace flipdeck
