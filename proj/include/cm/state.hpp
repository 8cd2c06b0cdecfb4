#pragma once

#include "cm/events.hpp"
#include "cm/mailbox.hpp"
#include "cm/registry.hpp"
#include "cm/types.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cm {

struct IdCounters {
    std::uint64_t participants = 0;
    std::uint64_t circles = 0;
    std::uint64_t notifications = 0;
    std::uint64_t tasks = 0;
    std::uint64_t reports = 0;
    std::uint64_t deliveries = 0;

    friend bool operator==(const IdCounters&, const IdCounters&) = default;
};

/// Everything the coordinator knows. Only `apply` mutates it, so folding the
/// log over an empty State reproduces the live one.
struct State {
    LogicalTime head = 0;
    IdCounters counters;
    std::map<ParticipantId, Participant> participants;
    std::map<CircleId, CareCircle> circles;
    TypeRegistry registry;
    std::map<NotificationId, Notification> notifications;
    std::map<NotificationId, ApprovalSession> sessions;
    std::map<TaskId, Task> tasks;
    std::map<TaskId, std::vector<TaskChange>> task_history;
    std::map<ReportId, ProgressReport> reports;
    MailboxStore mailboxes;

    Json to_json() const;
    static State from_json(const Json& j);

    /// Canonical text of to_json(); equal states give identical bytes.
    std::string canonical_text() const;

    friend bool operator==(const State&, const State&) = default;
};

/// Folds one event into the state. Throws CorruptRecord when the event does
/// not fit (wrong seq, unknown kind, dangling reference).
void apply(State& state, const DomainEvent& event);

State fold(std::span<const DomainEvent> events);

} // namespace cm
