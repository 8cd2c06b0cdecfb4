#include "cm/commands.hpp"

#include "cm/error.hpp"
#include "cm/json_fields.hpp"

namespace cm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<Metric> metrics_from_json(const Json& j) {
    std::vector<Metric> out;
    if (j.is_object()) {
        for (const auto& [name, value] : j.items()) {
            out.push_back(Json{{"name", name}, {"value", value}}.get<Metric>());
        }
    } else if (j.is_array()) {
        out = j.get<std::vector<Metric>>();
    } else {
        fail(ErrorCode::InvalidRequest, "metrics must be an object or a list");
    }
    return out;
}

} // namespace

std::string_view command_name(const Command& c) {
    return std::visit(overloaded{
                          [](const RegisterParticipant&) { return std::string_view("register"); },
                          [](const CreateCircle&) { return std::string_view("circle"); },
                          [](const AddCircleMember&) { return std::string_view("join"); },
                          [](const SubmitNotification&) { return std::string_view("notify"); },
                          [](const RespondApproval&) { return std::string_view("approve"); },
                          [](const CreateTask&) { return std::string_view("task"); },
                          [](const ApplyTaskChange&) { return std::string_view("change_task"); },
                          [](const ReportProgress&) { return std::string_view("report"); },
                          [](const RecordGoalReached&) { return std::string_view("goal"); },
                          [](const RegisterNotificationType&) { return std::string_view("register_type"); },
                          [](const AckMailbox&) { return std::string_view("ack"); },
                      },
                      c);
}

Json command_to_json(const Command& c) {
    Json j = std::visit(
        overloaded{
            [](const RegisterParticipant& x) {
                Json o{{"role", x.role}, {"display_name", x.display_name}};
                put_optional(o, "domain", x.domain);
                return o;
            },
            [](const CreateCircle& x) { return Json{{"experts", x.experts}, {"patients", x.patients}}; },
            [](const AddCircleMember& x) { return Json{{"circle", x.circle}, {"participant", x.participant}}; },
            [](const SubmitNotification& x) {
                return Json{{"sender", x.sender}, {"circle", x.circle}, {"type", x.type_code}, {"payload", x.payload}};
            },
            [](const RespondApproval& x) {
                return Json{{"expert", x.expert}, {"notification_id", x.notification_id}, {"verdict", x.verdict}};
            },
            [](const CreateTask& x) {
                Json o{{"creator", x.creator},
                       {"circle", x.circle},
                       {"patient", x.patient},
                       {"instructions", x.instructions},
                       {"goals", x.goals}};
                put_optional(o, "schedule", x.schedule);
                return o;
            },
            [](const ApplyTaskChange& x) {
                return Json{{"editor", x.editor}, {"task_id", x.task_id}, {"diff", x.diff}, {"notify_patient", x.notify_patient}};
            },
            [](const ReportProgress& x) {
                return Json{{"patient", x.patient}, {"task_id", x.task_id}, {"metrics", x.metrics}};
            },
            [](const RecordGoalReached& x) {
                return Json{{"patient", x.patient}, {"task_id", x.task_id}, {"goal_label", x.goal_label}};
            },
            [](const RegisterNotificationType& x) { return Json{{"spec", x.spec}}; },
            [](const AckMailbox& x) { return Json{{"mailbox", x.mailbox}, {"up_to_seq", x.up_to_seq}}; },
        },
        c);
    j["cmd"] = command_name(c);
    return j;
}

Command command_from_json(const Json& j) {
    const auto name = field<std::string>(j, "cmd");
    if (name == "register") {
        return RegisterParticipant{field<Role>(j, "role"), optional_field<std::string>(j, "domain"),
                                   field_or<std::string>(j, "display_name", "")};
    }
    if (name == "circle") {
        return CreateCircle{field_or<std::set<std::string>>(j, "experts", {}),
                            field_or<std::set<std::string>>(j, "patients", {})};
    }
    if (name == "join") {
        return AddCircleMember{field<std::string>(j, "circle"), field<std::string>(j, "participant")};
    }
    if (name == "notify") {
        return SubmitNotification{field<std::string>(j, "sender"), field<std::string>(j, "circle"),
                                  field<std::string>(j, "type"), field_or<Payload>(j, "payload", Payload{})};
    }
    if (name == "approve") {
        return RespondApproval{field<std::string>(j, "expert"), field<std::string>(j, "notification_id"),
                               field<Verdict>(j, "verdict")};
    }
    if (name == "task") {
        return CreateTask{field<std::string>(j, "creator"),
                          field<std::string>(j, "circle"),
                          field<std::string>(j, "patient"),
                          field_or<std::vector<std::string>>(j, "instructions", {}),
                          optional_field<Schedule>(j, "schedule"),
                          field_or<std::vector<Goal>>(j, "goals", {})};
    }
    if (name == "change_task") {
        return ApplyTaskChange{field<std::string>(j, "editor"), field<std::string>(j, "task_id"),
                               field_or<TaskDiff>(j, "diff", TaskDiff{}), field_or<bool>(j, "notify_patient", true)};
    }
    if (name == "report") {
        return ReportProgress{field<std::string>(j, "patient"), field<std::string>(j, "task_id"),
                              metrics_from_json(field_or<Json>(j, "metrics", Json::object()))};
    }
    if (name == "goal") {
        return RecordGoalReached{field<std::string>(j, "patient"), field<std::string>(j, "task_id"),
                                 field<std::string>(j, "goal_label")};
    }
    if (name == "register_type") {
        return RegisterNotificationType{field<NotificationTypeSpec>(j, "spec")};
    }
    if (name == "ack") {
        return AckMailbox{field<std::string>(j, "mailbox"), field<std::uint64_t>(j, "up_to_seq")};
    }
    fail(ErrorCode::InvalidRequest, "unknown command '" + name + "'");
}

} // namespace cm
