#include "cm/types.hpp"

#include "cm/json_fields.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace cm {

namespace {

template <typename E, std::size_t N>
void enum_to_json(Json& j, E v, const std::array<std::pair<E, const char*>, N>& names) {
    for (const auto& [e, n] : names) {
        if (e == v) {
            j = n;
            return;
        }
    }
    j = nullptr;
}

template <typename E, std::size_t N>
void enum_from_json(const Json& j, E& v, const std::array<std::pair<E, const char*>, N>& names) {
    if (!j.is_string()) fail(ErrorCode::InvalidRequest, "enum value must be a string");
    const auto& s = j.get_ref<const std::string&>();
    for (const auto& [e, n] : names) {
        if (s == n) {
            v = e;
            return;
        }
    }
    fail(ErrorCode::InvalidRequest, "unknown enum value '" + s + "'");
}

constexpr std::array kRoles = {
    std::pair{Role::Expert, "Expert"},
    std::pair{Role::EndUser, "EndUser"},
};
constexpr std::array kAudiences = {
    std::pair{Audience::OtherExperts, "OtherExperts"},
    std::pair{Audience::Patient, "Patient"},
    std::pair{Audience::AllExperts, "AllExperts"},
};
constexpr std::array kNotificationStates = {
    std::pair{NotificationState::Routed, "Routed"},
    std::pair{NotificationState::AwaitingApproval, "AwaitingApproval"},
    std::pair{NotificationState::Approved, "Approved"},
    std::pair{NotificationState::Rejected, "Rejected"},
    std::pair{NotificationState::Delivered, "Delivered"},
};
constexpr std::array kVerdicts = {
    std::pair{Verdict::Pending, "Pending"},
    std::pair{Verdict::OK, "OK"},
    std::pair{Verdict::Reject, "Reject"},
};
constexpr std::array kOutcomes = {
    std::pair{SessionOutcome::Open, "Open"},
    std::pair{SessionOutcome::AllApproved, "AllApproved"},
    std::pair{SessionOutcome::Rejected, "Rejected"},
};
constexpr std::array kTaskStatuses = {
    std::pair{TaskStatus::Active, "Active"},
    std::pair{TaskStatus::Completed, "Completed"},
    std::pair{TaskStatus::Withdrawn, "Withdrawn"},
};

} // namespace

std::set<ParticipantId> ApprovalSession::required_approvers() const {
    std::set<ParticipantId> out;
    for (const auto& [id, _] : verdicts) out.insert(id);
    return out;
}

const Goal* Task::find_goal(const std::string& label) const {
    auto it = std::find_if(goals.begin(), goals.end(), [&](const Goal& g) { return g.label == label; });
    return it == goals.end() ? nullptr : &*it;
}

void to_json(Json& j, Role v) { enum_to_json(j, v, kRoles); }
void from_json(const Json& j, Role& v) { enum_from_json(j, v, kRoles); }
void to_json(Json& j, Audience v) { enum_to_json(j, v, kAudiences); }
void from_json(const Json& j, Audience& v) { enum_from_json(j, v, kAudiences); }
void to_json(Json& j, NotificationState v) { enum_to_json(j, v, kNotificationStates); }
void from_json(const Json& j, NotificationState& v) { enum_from_json(j, v, kNotificationStates); }
void to_json(Json& j, Verdict v) { enum_to_json(j, v, kVerdicts); }
void from_json(const Json& j, Verdict& v) { enum_from_json(j, v, kVerdicts); }
void to_json(Json& j, SessionOutcome v) { enum_to_json(j, v, kOutcomes); }
void from_json(const Json& j, SessionOutcome& v) { enum_from_json(j, v, kOutcomes); }
void to_json(Json& j, TaskStatus v) { enum_to_json(j, v, kTaskStatuses); }
void from_json(const Json& j, TaskStatus& v) { enum_from_json(j, v, kTaskStatuses); }

void to_json(Json& j, const Participant& v) {
    j = Json{{"id", v.id}, {"role", v.role}, {"display_name", v.display_name}, {"active", v.active}};
    put_optional(j, "domain", v.domain);
}

void from_json(const Json& j, Participant& v) {
    v.id = field<std::string>(j, "id");
    v.role = field<Role>(j, "role");
    v.domain = optional_field<std::string>(j, "domain");
    v.display_name = field<std::string>(j, "display_name");
    v.active = field_or<bool>(j, "active", true);
}

void to_json(Json& j, const CareCircle& v) {
    j = Json{{"id", v.id}, {"experts", v.experts}, {"patients", v.patients}};
}

void from_json(const Json& j, CareCircle& v) {
    v.id = field<std::string>(j, "id");
    v.experts = field_or<std::set<std::string>>(j, "experts", {});
    v.patients = field_or<std::set<std::string>>(j, "patients", {});
}

void to_json(Json& j, const NotificationTypeSpec& v) {
    j = Json{{"code", v.code},
             {"origin_role", v.origin_role},
             {"audience", v.audience},
             {"requires_approval", v.requires_approval},
             {"patient_visible", v.patient_visible}};
}

void from_json(const Json& j, NotificationTypeSpec& v) {
    v.code = field<std::string>(j, "code");
    v.origin_role = field<Role>(j, "origin_role");
    v.audience = field<Audience>(j, "audience");
    v.requires_approval = field_or<bool>(j, "requires_approval", false);
    v.patient_visible = field_or<bool>(j, "patient_visible", false);
}

void to_json(Json& j, const Attachment& v) { j = Json{{"kind", v.kind}, {"ref", v.ref}}; }

void from_json(const Json& j, Attachment& v) {
    v.kind = field<std::string>(j, "kind");
    v.ref = field<std::string>(j, "ref");
}

void to_json(Json& j, const Payload& v) {
    j = Json{{"text", v.text}};
    put_optional(j, "attachment", v.attachment);
}

void from_json(const Json& j, Payload& v) {
    v.text = field_or<std::string>(j, "text", "");
    v.attachment = optional_field<Attachment>(j, "attachment");
}

void to_json(Json& j, const Notification& v) {
    j = Json{{"id", v.id},
             {"type_code", v.type_code},
             {"sender", v.sender},
             {"circle", v.circle},
             {"payload", v.payload},
             {"created_at", v.created_at},
             {"state", v.state},
             {"unacked_direct", v.unacked_direct}};
}

void from_json(const Json& j, Notification& v) {
    v.id = field<std::string>(j, "id");
    v.type_code = field<std::string>(j, "type_code");
    v.sender = field<std::string>(j, "sender");
    v.circle = field<std::string>(j, "circle");
    v.payload = field<Payload>(j, "payload");
    v.created_at = field<LogicalTime>(j, "created_at");
    v.state = field<NotificationState>(j, "state");
    v.unacked_direct = field_or<std::uint64_t>(j, "unacked_direct", 0);
}

void to_json(Json& j, const ApprovalSession& v) {
    j = Json{{"notification_id", v.notification_id}, {"verdicts", v.verdicts}, {"outcome", v.outcome}};
}

void from_json(const Json& j, ApprovalSession& v) {
    v.notification_id = field<std::string>(j, "notification_id");
    v.verdicts = field<std::map<std::string, Verdict>>(j, "verdicts");
    v.outcome = field<SessionOutcome>(j, "outcome");
}

void to_json(Json& j, const Goal& v) {
    j = Json{{"label", v.label}, {"target", v.target}, {"reached", v.reached}};
}

void from_json(const Json& j, Goal& v) {
    v.label = field<std::string>(j, "label");
    v.target = field_or<std::string>(j, "target", "");
    v.reached = field_or<bool>(j, "reached", false);
}

void to_json(Json& j, const Schedule& v) {
    j = Json{{"recurrence", v.recurrence}};
    put_optional(j, "start", v.start);
    put_optional(j, "end", v.end);
}

void from_json(const Json& j, Schedule& v) {
    v.recurrence = field_or<std::string>(j, "recurrence", "");
    v.start = optional_field<std::int64_t>(j, "start");
    v.end = optional_field<std::int64_t>(j, "end");
}

void to_json(Json& j, const Task& v) {
    j = Json{{"id", v.id},
             {"circle", v.circle},
             {"patient", v.patient},
             {"created_by", v.created_by},
             {"domain", v.domain},
             {"instructions", v.instructions},
             {"goals", v.goals},
             {"status", v.status},
             {"version", v.version}};
    put_optional(j, "schedule", v.schedule);
}

void from_json(const Json& j, Task& v) {
    v.id = field<std::string>(j, "id");
    v.circle = field<std::string>(j, "circle");
    v.patient = field<std::string>(j, "patient");
    v.created_by = field<std::string>(j, "created_by");
    v.domain = field<std::string>(j, "domain");
    v.instructions = field_or<std::vector<std::string>>(j, "instructions", {});
    v.schedule = optional_field<Schedule>(j, "schedule");
    v.goals = field_or<std::vector<Goal>>(j, "goals", {});
    v.status = field_or<TaskStatus>(j, "status", TaskStatus::Active);
    v.version = field_or<std::uint64_t>(j, "version", 1);
}

void to_json(Json& j, const TaskDiff& v) {
    j = Json::object();
    put_optional(j, "instructions", v.instructions);
    put_optional(j, "schedule", v.schedule);
    put_optional(j, "goals", v.goals);
    put_optional(j, "status", v.status);
}

void from_json(const Json& j, TaskDiff& v) {
    v.instructions = optional_field<std::vector<std::string>>(j, "instructions");
    v.schedule = optional_field<Schedule>(j, "schedule");
    v.goals = optional_field<std::vector<Goal>>(j, "goals");
    v.status = optional_field<TaskStatus>(j, "status");
}

void to_json(Json& j, const TaskChange& v) {
    j = Json{{"task_id", v.task_id},
             {"editor", v.editor},
             {"diff", v.diff},
             {"notify_patient", v.notify_patient},
             {"version", v.version},
             {"notification_id", v.notification_id}};
}

void from_json(const Json& j, TaskChange& v) {
    v.task_id = field<std::string>(j, "task_id");
    v.editor = field<std::string>(j, "editor");
    v.diff = field<TaskDiff>(j, "diff");
    v.notify_patient = field<bool>(j, "notify_patient");
    v.version = field<std::uint64_t>(j, "version");
    v.notification_id = field<std::string>(j, "notification_id");
}

void to_json(Json& j, const Metric& v) {
    j = Json{{"name", v.name}};
    std::visit([&](const auto& x) { j["value"] = x; }, v.value);
}

void from_json(const Json& j, Metric& v) {
    v.name = field<std::string>(j, "name");
    const auto it = j.find("value");
    if (it == j.end()) fail(ErrorCode::InvalidRequest, "metric '" + v.name + "' has no value");
    if (it->is_number()) {
        v.value = it->get<double>();
    } else if (it->is_string()) {
        v.value = it->get<std::string>();
    } else {
        fail(ErrorCode::InvalidRequest, "metric '" + v.name + "' must be text or number");
    }
}

void to_json(Json& j, const ProgressReport& v) {
    j = Json{{"id", v.id},
             {"task_id", v.task_id},
             {"patient", v.patient},
             {"metrics", v.metrics},
             {"notification_id", v.notification_id}};
}

void from_json(const Json& j, ProgressReport& v) {
    v.id = field<std::string>(j, "id");
    v.task_id = field<std::string>(j, "task_id");
    v.patient = field<std::string>(j, "patient");
    v.metrics = field<std::vector<Metric>>(j, "metrics");
    v.notification_id = field<std::string>(j, "notification_id");
}

void to_json(Json& j, const RoutingOutcome& v) {
    j = Json{{"notification_id", v.notification_id}, {"state", v.state}, {"delivery_count", v.delivery_count}};
}

void from_json(const Json& j, RoutingOutcome& v) {
    v.notification_id = field<std::string>(j, "notification_id");
    v.state = field<NotificationState>(j, "state");
    v.delivery_count = field<std::size_t>(j, "delivery_count");
}

} // namespace cm
