#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cm {

enum class ErrorCode {
    // registration / membership
    DomainMissing,
    DomainForbidden,
    UnknownParticipant,
    InactiveParticipant,
    UnknownCircle,
    AlreadyMember,
    NotCircleMember,
    CircleHasNoExperts,
    // routing
    RoleMismatch,
    UnknownType,
    NoApproversAvailable,
    NoRecipients,
    PayloadTooLarge,
    // approvals
    UnknownNotification,
    SessionClosed,
    NotAnApprover,
    DuplicateResponse,
    // tasks
    UnknownTask,
    TaskNotActive,
    NotTaskOwner,
    GoalAlreadyReached,
    UnknownGoal,
    // registry
    CodeCollision,
    InvalidSpec,
    // mailbox
    UnknownMailbox,
    SeqBeyondHead,
    // storage
    StorageFailure,
    CorruptRecord,
    LogCorrupt,
    // transport / tooling
    InvalidRequest,
    IdempotencyKeyReuse,
    Unauthorized,
    Forbidden,
    NotFound,
    BindFailure,
    ParseError,
    ExpectationFailed,
    TargetUnreachable,
};

std::string_view to_string(ErrorCode code);
ErrorCode error_code_from_string(std::string_view name);

/// Failure of a coordinator command or of the infrastructure around it.
/// The code's name is what crosses the wire verbatim.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace cm
