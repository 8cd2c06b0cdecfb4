#pragma once

#include "cm/mailbox.hpp"
#include "cm/types.hpp"

#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace cm {

struct RegisterParticipant {
    Role role = Role::EndUser;
    std::optional<std::string> domain;
    std::string display_name;
};

struct CreateCircle {
    std::set<ParticipantId> experts;
    std::set<ParticipantId> patients;
};

struct AddCircleMember {
    CircleId circle;
    ParticipantId participant;
};

struct SubmitNotification {
    ParticipantId sender;
    CircleId circle;
    TypeCode type_code;
    Payload payload;
};

struct RespondApproval {
    ParticipantId expert;
    NotificationId notification_id;
    Verdict verdict = Verdict::OK;
};

struct CreateTask {
    ParticipantId creator;
    CircleId circle;
    ParticipantId patient;
    std::vector<std::string> instructions;
    std::optional<Schedule> schedule;
    std::vector<Goal> goals;
};

struct ApplyTaskChange {
    ParticipantId editor;
    TaskId task_id;
    TaskDiff diff;
    bool notify_patient = true;
};

struct ReportProgress {
    ParticipantId patient;
    TaskId task_id;
    std::vector<Metric> metrics;
};

struct RecordGoalReached {
    ParticipantId patient;
    TaskId task_id;
    std::string goal_label;
};

struct RegisterNotificationType {
    NotificationTypeSpec spec;
};

struct AckMailbox {
    ParticipantId mailbox;
    std::uint64_t up_to_seq = 0;
};

using Command = std::variant<RegisterParticipant, CreateCircle, AddCircleMember, SubmitNotification,
                             RespondApproval, CreateTask, ApplyTaskChange, ReportProgress,
                             RecordGoalReached, RegisterNotificationType, AckMailbox>;

/// Name used in scenario files: "register", "circle", "join", "notify",
/// "approve", "task", "change_task", "report", "goal", "register_type", "ack".
std::string_view command_name(const Command& c);

/// {"cmd": <name>, ...fields}. Actor fields (sender, expert, ...) are
/// plain members.
Json command_to_json(const Command& c);
Command command_from_json(const Json& j);

} // namespace cm
