#include "flipdeck/error.hpp"

namespace flipdeck {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::InvalidQuestion: return "InvalidQuestion";
    case ErrorCode::PhaseViolation: return "PhaseViolation";
    case ErrorCode::AlreadyVoted: return "AlreadyVoted";
    case ErrorCode::DeadlineExpired: return "DeadlineExpired";
    case ErrorCode::VoteRequired: return "VoteRequired";
    case ErrorCode::InvalidVote: return "InvalidVote";
    case ErrorCode::InvalidSubmission: return "InvalidSubmission";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::Unauthenticated: return "Unauthenticated";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::UnknownCue: return "UnknownCue";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::NegativeLatency: return "NegativeLatency";
    case ErrorCode::BadRequest: return "BadRequest";
    }
    return "Unknown";
}

} // namespace flipdeck
