#pragma once

#include "cm/canonical.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace cm {

using ParticipantId = std::string;
using CircleId = std::string;
using NotificationId = std::string;
using TaskId = std::string;
using ReportId = std::string;
using TypeCode = std::string;

/// Position in the global event log. All ordering in the domain uses it.
using LogicalTime = std::uint64_t;

inline constexpr std::size_t kMaxPayloadBytes = 64 * 1024;

enum class Role { Expert, EndUser };
enum class Audience { OtherExperts, Patient, AllExperts };
enum class NotificationState { Routed, AwaitingApproval, Approved, Rejected, Delivered };
enum class Verdict { Pending, OK, Reject };
enum class SessionOutcome { Open, AllApproved, Rejected };
enum class TaskStatus { Active, Completed, Withdrawn };

struct Participant {
    ParticipantId id;
    Role role = Role::EndUser;
    std::optional<std::string> domain;
    std::string display_name;
    bool active = true;

    friend bool operator==(const Participant&, const Participant&) = default;
};

struct CareCircle {
    CircleId id;
    std::set<ParticipantId> experts;
    std::set<ParticipantId> patients;

    bool contains(const ParticipantId& p) const { return experts.contains(p) || patients.contains(p); }

    friend bool operator==(const CareCircle&, const CareCircle&) = default;
};

struct NotificationTypeSpec {
    TypeCode code;
    Role origin_role = Role::Expert;
    Audience audience = Audience::OtherExperts;
    bool requires_approval = false;
    bool patient_visible = false;

    friend bool operator==(const NotificationTypeSpec&, const NotificationTypeSpec&) = default;
};

/// Structured reference carried next to the text body ("task_change",
/// "report", "goal").
struct Attachment {
    std::string kind;
    std::string ref;

    friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct Payload {
    std::string text;
    std::optional<Attachment> attachment;

    std::size_t byte_size() const {
        return text.size() + (attachment ? attachment->kind.size() + attachment->ref.size() : 0);
    }

    friend bool operator==(const Payload&, const Payload&) = default;
};

struct Notification {
    NotificationId id;
    TypeCode type_code;
    ParticipantId sender;
    CircleId circle;
    Payload payload;
    LogicalTime created_at = 0;
    NotificationState state = NotificationState::Routed;
    // Direct deliveries still waiting for an ack; Routed -> Delivered at zero.
    std::uint64_t unacked_direct = 0;

    friend bool operator==(const Notification&, const Notification&) = default;
};

struct ApprovalSession {
    NotificationId notification_id;
    std::map<ParticipantId, Verdict> verdicts;
    SessionOutcome outcome = SessionOutcome::Open;

    std::set<ParticipantId> required_approvers() const;

    friend bool operator==(const ApprovalSession&, const ApprovalSession&) = default;
};

struct Goal {
    std::string label;
    std::string target;
    bool reached = false;

    friend bool operator==(const Goal&, const Goal&) = default;
};

struct Schedule {
    std::string recurrence;
    std::optional<std::int64_t> start;
    std::optional<std::int64_t> end;

    friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct Task {
    TaskId id;
    CircleId circle;
    ParticipantId patient;
    ParticipantId created_by;
    std::string domain;
    std::vector<std::string> instructions;
    std::optional<Schedule> schedule;
    std::vector<Goal> goals;
    TaskStatus status = TaskStatus::Active;
    std::uint64_t version = 1;

    const Goal* find_goal(const std::string& label) const;

    friend bool operator==(const Task&, const Task&) = default;
};

struct TaskDiff {
    std::optional<std::vector<std::string>> instructions;
    std::optional<Schedule> schedule;
    std::optional<std::vector<Goal>> goals;
    std::optional<TaskStatus> status;

    friend bool operator==(const TaskDiff&, const TaskDiff&) = default;
};

struct TaskChange {
    TaskId task_id;
    ParticipantId editor;
    TaskDiff diff;
    bool notify_patient = true;
    std::uint64_t version = 0;
    NotificationId notification_id;

    friend bool operator==(const TaskChange&, const TaskChange&) = default;
};

using MetricValue = std::variant<double, std::string>;

struct Metric {
    std::string name;
    MetricValue value;

    friend bool operator==(const Metric&, const Metric&) = default;
};

struct ProgressReport {
    ReportId id;
    TaskId task_id;
    ParticipantId patient;
    std::vector<Metric> metrics;
    NotificationId notification_id;

    friend bool operator==(const ProgressReport&, const ProgressReport&) = default;
};

struct RoutingOutcome {
    NotificationId notification_id;
    NotificationState state = NotificationState::Routed;
    std::size_t delivery_count = 0;

    friend bool operator==(const RoutingOutcome&, const RoutingOutcome&) = default;
};

// JSON mapping. Optional fields are omitted when absent.
void to_json(Json& j, Role v);
void from_json(const Json& j, Role& v);
void to_json(Json& j, Audience v);
void from_json(const Json& j, Audience& v);
void to_json(Json& j, NotificationState v);
void from_json(const Json& j, NotificationState& v);
void to_json(Json& j, Verdict v);
void from_json(const Json& j, Verdict& v);
void to_json(Json& j, SessionOutcome v);
void from_json(const Json& j, SessionOutcome& v);
void to_json(Json& j, TaskStatus v);
void from_json(const Json& j, TaskStatus& v);

void to_json(Json& j, const Participant& v);
void from_json(const Json& j, Participant& v);
void to_json(Json& j, const CareCircle& v);
void from_json(const Json& j, CareCircle& v);
void to_json(Json& j, const NotificationTypeSpec& v);
void from_json(const Json& j, NotificationTypeSpec& v);
void to_json(Json& j, const Attachment& v);
void from_json(const Json& j, Attachment& v);
void to_json(Json& j, const Payload& v);
void from_json(const Json& j, Payload& v);
void to_json(Json& j, const Notification& v);
void from_json(const Json& j, Notification& v);
void to_json(Json& j, const ApprovalSession& v);
void from_json(const Json& j, ApprovalSession& v);
void to_json(Json& j, const Goal& v);
void from_json(const Json& j, Goal& v);
void to_json(Json& j, const Schedule& v);
void from_json(const Json& j, Schedule& v);
void to_json(Json& j, const Task& v);
void from_json(const Json& j, Task& v);
void to_json(Json& j, const TaskDiff& v);
void from_json(const Json& j, TaskDiff& v);
void to_json(Json& j, const TaskChange& v);
void from_json(const Json& j, TaskChange& v);
void to_json(Json& j, const Metric& v);
void from_json(const Json& j, Metric& v);
void to_json(Json& j, const ProgressReport& v);
void from_json(const Json& j, ProgressReport& v);
void to_json(Json& j, const RoutingOutcome& v);
void from_json(const Json& j, RoutingOutcome& v);

} // namespace cm
