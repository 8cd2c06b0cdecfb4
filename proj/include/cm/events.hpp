#pragma once

#include "cm/canonical.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace cm {

namespace event_kind {
inline constexpr std::string_view ParticipantRegistered = "ParticipantRegistered";
inline constexpr std::string_view CircleCreated = "CircleCreated";
inline constexpr std::string_view CircleMemberAdded = "CircleMemberAdded";
inline constexpr std::string_view NotificationSubmitted = "NotificationSubmitted";
inline constexpr std::string_view ApprovalRecorded = "ApprovalRecorded";
inline constexpr std::string_view SessionClosed = "SessionClosed";
inline constexpr std::string_view TaskCreated = "TaskCreated";
inline constexpr std::string_view TaskChanged = "TaskChanged";
inline constexpr std::string_view ProgressReported = "ProgressReported";
inline constexpr std::string_view GoalReached = "GoalReached";
inline constexpr std::string_view TypeRegistered = "TypeRegistered";
inline constexpr std::string_view DeliveryEnqueued = "DeliveryEnqueued";
inline constexpr std::string_view DeliveryAcked = "DeliveryAcked";
} // namespace event_kind

/// One log record. `recorded_at` is wall-clock milliseconds and carries no
/// meaning for replay or comparison.
struct DomainEvent {
    std::uint64_t seq = 0;
    std::string kind;
    Json body;
    std::int64_t recorded_at = 0;

    friend bool operator==(const DomainEvent&, const DomainEvent&) = default;
};

/// Canonical text of {seq, kind, body}: the unit of digests and wire/core comparison.
std::string digest_line(const DomainEvent& e);

} // namespace cm
