#pragma once

#include "cm/commands.hpp"
#include "cm/events.hpp"
#include "cm/state.hpp"

#include <vector>

namespace cm {

/// What a command would do: the events it produces (seqs already assigned
/// from the current head) and the operation's result.
struct Decision {
    std::vector<DomainEvent> events;
    Json result;
};

/// The coordinator: validates commands against the current state, routes
/// notifications through the interaction map and runs approval sessions.
///
/// `decide` is pure; `commit` folds a decision's events into the state. A
/// command either fails before producing anything or produces its complete
/// event set.
class Coordinator {
public:
    Coordinator() = default;
    explicit Coordinator(State state) : state_(std::move(state)) {}

    const State& state() const { return state_; }

    Decision decide(const Command& command) const;
    void commit(const Decision& decision);

    /// decide + commit, keeping the events in `journal()`.
    Json execute(const Command& command);
    const std::vector<DomainEvent>& journal() const { return journal_; }

    Participant register_participant(Role role, std::optional<std::string> domain, std::string display_name);
    CareCircle create_circle(std::set<ParticipantId> experts, std::set<ParticipantId> patients);
    CareCircle add_member(const CircleId& circle, const ParticipantId& participant);
    RoutingOutcome submit_notification(const ParticipantId& sender, const CircleId& circle,
                                       const TypeCode& type_code, Payload payload);
    ApprovalSession respond_approval(const ParticipantId& expert, const NotificationId& notification,
                                     Verdict verdict);
    Task create_task(const ParticipantId& creator, const CircleId& circle, const ParticipantId& patient,
                     std::vector<std::string> instructions, std::vector<Goal> goals,
                     std::optional<Schedule> schedule = std::nullopt);
    TaskChange apply_task_change(const ParticipantId& editor, const TaskId& task, TaskDiff diff, bool notify_patient);
    Notification report_progress(const ParticipantId& patient, const TaskId& task, std::vector<Metric> metrics);
    Notification record_goal_reached(const ParticipantId& patient, const TaskId& task, const std::string& goal_label);
    std::vector<NotificationTypeSpec> register_notification_type(const NotificationTypeSpec& spec);
    Cursor ack(const ParticipantId& mailbox, std::uint64_t up_to_seq);

private:
    State state_;
    std::vector<DomainEvent> journal_;
};

} // namespace cm
