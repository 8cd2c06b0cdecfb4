#include "cm/error.hpp"

#include <array>
#include <utility>

namespace cm {

namespace {

constexpr std::array kNames = {
    std::pair{ErrorCode::DomainMissing, "DomainMissing"},
    std::pair{ErrorCode::DomainForbidden, "DomainForbidden"},
    std::pair{ErrorCode::UnknownParticipant, "UnknownParticipant"},
    std::pair{ErrorCode::InactiveParticipant, "InactiveParticipant"},
    std::pair{ErrorCode::UnknownCircle, "UnknownCircle"},
    std::pair{ErrorCode::AlreadyMember, "AlreadyMember"},
    std::pair{ErrorCode::NotCircleMember, "NotCircleMember"},
    std::pair{ErrorCode::CircleHasNoExperts, "CircleHasNoExperts"},
    std::pair{ErrorCode::RoleMismatch, "RoleMismatch"},
    std::pair{ErrorCode::UnknownType, "UnknownType"},
    std::pair{ErrorCode::NoApproversAvailable, "NoApproversAvailable"},
    std::pair{ErrorCode::NoRecipients, "NoRecipients"},
    std::pair{ErrorCode::PayloadTooLarge, "PayloadTooLarge"},
    std::pair{ErrorCode::UnknownNotification, "UnknownNotification"},
    std::pair{ErrorCode::SessionClosed, "SessionClosed"},
    std::pair{ErrorCode::NotAnApprover, "NotAnApprover"},
    std::pair{ErrorCode::DuplicateResponse, "DuplicateResponse"},
    std::pair{ErrorCode::UnknownTask, "UnknownTask"},
    std::pair{ErrorCode::TaskNotActive, "TaskNotActive"},
    std::pair{ErrorCode::NotTaskOwner, "NotTaskOwner"},
    std::pair{ErrorCode::GoalAlreadyReached, "GoalAlreadyReached"},
    std::pair{ErrorCode::UnknownGoal, "UnknownGoal"},
    std::pair{ErrorCode::CodeCollision, "CodeCollision"},
    std::pair{ErrorCode::InvalidSpec, "InvalidSpec"},
    std::pair{ErrorCode::UnknownMailbox, "UnknownMailbox"},
    std::pair{ErrorCode::SeqBeyondHead, "SeqBeyondHead"},
    std::pair{ErrorCode::StorageFailure, "StorageFailure"},
    std::pair{ErrorCode::CorruptRecord, "CorruptRecord"},
    std::pair{ErrorCode::LogCorrupt, "LogCorrupt"},
    std::pair{ErrorCode::InvalidRequest, "InvalidRequest"},
    std::pair{ErrorCode::IdempotencyKeyReuse, "IdempotencyKeyReuse"},
    std::pair{ErrorCode::Unauthorized, "Unauthorized"},
    std::pair{ErrorCode::Forbidden, "Forbidden"},
    std::pair{ErrorCode::NotFound, "NotFound"},
    std::pair{ErrorCode::BindFailure, "BindFailure"},
    std::pair{ErrorCode::ParseError, "ParseError"},
    std::pair{ErrorCode::ExpectationFailed, "ExpectationFailed"},
    std::pair{ErrorCode::TargetUnreachable, "TargetUnreachable"},
};

} // namespace

std::string_view to_string(ErrorCode code) {
    for (const auto& [c, name] : kNames) {
        if (c == code) return name;
    }
    return "Unknown";
}

ErrorCode error_code_from_string(std::string_view name) {
    for (const auto& [c, n] : kNames) {
        if (n == name) return c;
    }
    throw Error(ErrorCode::InvalidRequest, "unknown error code: " + std::string(name));
}

} // namespace cm
