#include "cm/coordinator.hpp"

#include "cm/error.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace cm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Accumulates the events of one command, predicting the seqs and ids that
/// `apply` will see.
class EventBuilder {
public:
    explicit EventBuilder(const State& s) : s_(s), counters_(s.counters) {}

    LogicalTime next_seq() const { return s_.head + events_.size() + 1; }

    void emit(std::string_view kind, Json body) {
        events_.push_back(DomainEvent{next_seq(), std::string(kind), std::move(body), 0});
    }

    std::string next_participant_id() { return "p" + std::to_string(++counters_.participants); }
    std::string next_circle_id() { return "c" + std::to_string(++counters_.circles); }
    std::string next_notification_id() { return "n" + std::to_string(++counters_.notifications); }
    std::string next_task_id() { return "t" + std::to_string(++counters_.tasks); }
    std::string next_report_id() { return "r" + std::to_string(++counters_.reports); }

    void deliver(const ParticipantId& mailbox, const NotificationId& notification, DeliveryKind kind, Json body) {
        auto& head = heads_.try_emplace(mailbox, s_.mailboxes.head(mailbox)).first->second;
        Delivery d{"d" + std::to_string(++counters_.deliveries), mailbox, ++head, notification, kind, std::move(body), false};
        emit(event_kind::DeliveryEnqueued, Json{{"delivery", d}});
        ++delivery_count_;
    }

    std::size_t delivery_count() const { return delivery_count_; }

    std::vector<DomainEvent> take() { return std::move(events_); }

private:
    const State& s_;
    IdCounters counters_;
    std::map<ParticipantId, std::uint64_t> heads_;
    std::vector<DomainEvent> events_;
    std::size_t delivery_count_ = 0;
};

const Participant& participant(const State& s, const ParticipantId& id) {
    auto it = s.participants.find(id);
    if (it == s.participants.end()) fail(ErrorCode::UnknownParticipant, "unknown participant '" + id + "'");
    return it->second;
}

const Participant& active_participant(const State& s, const ParticipantId& id) {
    const auto& p = participant(s, id);
    if (!p.active) fail(ErrorCode::InactiveParticipant, "participant '" + id + "' is inactive");
    return p;
}

const CareCircle& circle(const State& s, const CircleId& id) {
    auto it = s.circles.find(id);
    if (it == s.circles.end()) fail(ErrorCode::UnknownCircle, "unknown circle '" + id + "'");
    return it->second;
}

const Task& task(const State& s, const TaskId& id) {
    auto it = s.tasks.find(id);
    if (it == s.tasks.end()) fail(ErrorCode::UnknownTask, "unknown task '" + id + "'");
    return it->second;
}

const NotificationTypeSpec& type_spec(const State& s, const TypeCode& code) {
    const auto* spec = s.registry.find(code);
    if (!spec) fail(ErrorCode::UnknownType, "unknown notification type '" + code + "'");
    return *spec;
}

std::set<ParticipantId> others(const std::set<ParticipantId>& ids, const ParticipantId& sender) {
    auto out = ids;
    out.erase(sender);
    return out;
}

Json delivery_body(const Notification& n) {
    return Json{{"type", n.type_code}, {"sender", n.sender}, {"circle", n.circle}, {"payload", n.payload}};
}

/// Everything a routed (non-approval) notification needs besides its type.
struct RouteRequest {
    ParticipantId sender;
    const CareCircle* circle;
    const NotificationTypeSpec* spec;
    Payload payload;
    // Patient audience override (task changes target the task's patient).
    std::optional<std::set<ParticipantId>> patients;
    // Accept an empty audience (task-change notices with no peers).
    bool allow_empty = false;
};

struct Routed {
    Notification notification;
    RoutingOutcome outcome;
};

/// Resolves the audience of a non-approval type. The sender is never part of it.
std::set<ParticipantId> audience_of(const RouteRequest& r) {
    std::set<ParticipantId> out;
    switch (r.spec->audience) {
    case Audience::OtherExperts:
    case Audience::AllExperts:
        out = others(r.circle->experts, r.sender);
        break;
    case Audience::Patient:
        out = others(r.circle->experts, r.sender);
        if (r.spec->patient_visible) {
            const auto& patients = r.patients ? *r.patients : r.circle->patients;
            out.insert(patients.begin(), patients.end());
        }
        break;
    }
    out.erase(r.sender);
    return out;
}

void check_payload(const Payload& p) {
    if (p.byte_size() > kMaxPayloadBytes) {
        fail(ErrorCode::PayloadTooLarge, "payload of " + std::to_string(p.byte_size()) + " bytes exceeds " +
                                             std::to_string(kMaxPayloadBytes));
    }
}

Routed route(EventBuilder& b, const RouteRequest& r) {
    check_payload(r.payload);
    if (r.circle->experts.empty()) {
        fail(ErrorCode::CircleHasNoExperts, "circle '" + r.circle->id + "' has no experts");
    }

    Notification n;
    n.id = b.next_notification_id();
    n.type_code = r.spec->code;
    n.sender = r.sender;
    n.circle = r.circle->id;
    n.payload = r.payload;
    n.created_at = b.next_seq();

    if (r.spec->requires_approval) {
        const auto approvers = others(r.circle->experts, r.sender);
        if (approvers.empty()) {
            fail(ErrorCode::NoApproversAvailable, "no other expert in circle '" + r.circle->id + "' can approve");
        }
        if (r.circle->patients.empty()) {
            fail(ErrorCode::NoRecipients, "circle '" + r.circle->id + "' has no patient to forward to");
        }
        n.state = NotificationState::AwaitingApproval;
        b.emit(event_kind::NotificationSubmitted, Json{{"notification", n}, {"approvers", approvers}});
        Json body = delivery_body(n);
        body["approvers"] = approvers;
        for (const auto& a : approvers) b.deliver(a, n.id, DeliveryKind::ApprovalRequest, body);
    } else {
        const auto audience = audience_of(r);
        if (audience.empty() && !r.allow_empty) {
            fail(ErrorCode::NoRecipients, "type " + r.spec->code + " from '" + r.sender + "' reaches nobody in circle '" +
                                              r.circle->id + "'");
        }
        n.state = audience.empty() ? NotificationState::Delivered : NotificationState::Routed;
        b.emit(event_kind::NotificationSubmitted, Json{{"notification", n}});
        const Json body = delivery_body(n);
        for (const auto& m : audience) b.deliver(m, n.id, DeliveryKind::Direct, body);
        n.unacked_direct = audience.size();
    }
    return Routed{n, RoutingOutcome{n.id, n.state, b.delivery_count()}};
}

// --- handlers -------------------------------------------------------------

Decision handle(const State& s, const RegisterParticipant& c) {
    if (c.role == Role::Expert && (!c.domain || c.domain->empty())) {
        fail(ErrorCode::DomainMissing, "an expert needs a domain");
    }
    if (c.role == Role::EndUser && c.domain) fail(ErrorCode::DomainForbidden, "an end-user has no domain");
    EventBuilder b(s);
    Participant p{b.next_participant_id(), c.role, c.domain, c.display_name, true};
    b.emit(event_kind::ParticipantRegistered, Json{{"participant", p}});
    return {b.take(), p};
}

void check_role(const State& s, const ParticipantId& id, Role role) {
    if (active_participant(s, id).role != role) {
        fail(ErrorCode::RoleMismatch, "participant '" + id + "' does not have the required role");
    }
}

Decision handle(const State& s, const CreateCircle& c) {
    for (const auto& e : c.experts) check_role(s, e, Role::Expert);
    for (const auto& p : c.patients) check_role(s, p, Role::EndUser);
    EventBuilder b(s);
    CareCircle circle{b.next_circle_id(), c.experts, c.patients};
    b.emit(event_kind::CircleCreated, Json{{"circle", circle}});
    return {b.take(), circle};
}

Decision handle(const State& s, const AddCircleMember& c) {
    CareCircle updated = circle(s, c.circle);
    const auto& p = active_participant(s, c.participant);
    if (updated.contains(p.id)) fail(ErrorCode::AlreadyMember, "'" + p.id + "' is already in '" + updated.id + "'");
    (p.role == Role::Expert ? updated.experts : updated.patients).insert(p.id);
    EventBuilder b(s);
    b.emit(event_kind::CircleMemberAdded, Json{{"circle", updated.id}, {"participant", p.id}});
    return {b.take(), updated};
}

Decision handle(const State& s, const SubmitNotification& c) {
    const auto& sender = active_participant(s, c.sender);
    const auto& circ = circle(s, c.circle);
    const auto& spec = type_spec(s, c.type_code);
    if (!circ.contains(sender.id)) fail(ErrorCode::NotCircleMember, "'" + sender.id + "' is not in '" + circ.id + "'");
    if (sender.role != spec.origin_role) {
        fail(ErrorCode::RoleMismatch, "type " + spec.code + " cannot be sent by '" + sender.id + "'");
    }
    EventBuilder b(s);
    auto routed = route(b, RouteRequest{sender.id, &circ, &spec, c.payload, std::nullopt, false});
    return {b.take(), routed.outcome};
}

Decision handle(const State& s, const RespondApproval& c) {
    const auto& expert = active_participant(s, c.expert);
    auto nit = s.notifications.find(c.notification_id);
    if (nit == s.notifications.end()) {
        fail(ErrorCode::UnknownNotification, "unknown notification '" + c.notification_id + "'");
    }
    const Notification& n = nit->second;
    auto sit = s.sessions.find(n.id);
    if (sit == s.sessions.end() || !sit->second.verdicts.contains(expert.id)) {
        fail(ErrorCode::NotAnApprover, "'" + expert.id + "' is not asked to approve '" + n.id + "'");
    }
    if (c.verdict == Verdict::Pending) fail(ErrorCode::InvalidRequest, "verdict must be OK or Reject");
    ApprovalSession session = sit->second;
    if (session.verdicts.at(expert.id) != Verdict::Pending) {
        fail(ErrorCode::DuplicateResponse, "'" + expert.id + "' already answered '" + n.id + "'");
    }
    if (session.outcome != SessionOutcome::Open) fail(ErrorCode::SessionClosed, "approval of '" + n.id + "' is closed");

    EventBuilder b(s);
    session.verdicts[expert.id] = c.verdict;
    b.emit(event_kind::ApprovalRecorded,
           Json{{"notification_id", n.id}, {"expert", expert.id}, {"verdict", c.verdict}});

    if (c.verdict == Verdict::Reject) {
        session.outcome = SessionOutcome::Rejected;
        b.emit(event_kind::SessionClosed, Json{{"notification_id", n.id}, {"outcome", session.outcome}});
        Json body = delivery_body(n);
        body["rejected_by"] = expert.id;
        b.deliver(n.sender, n.id, DeliveryKind::RejectionNotice, std::move(body));
    } else if (std::all_of(session.verdicts.begin(), session.verdicts.end(),
                           [](const auto& kv) { return kv.second == Verdict::OK; })) {
        session.outcome = SessionOutcome::AllApproved;
        b.emit(event_kind::SessionClosed, Json{{"notification_id", n.id}, {"outcome", session.outcome}});
        const Json body = delivery_body(n);
        for (const auto& patient : circle(s, n.circle).patients) {
            b.deliver(patient, n.id, DeliveryKind::Direct, body);
        }
        Json result_body = body;
        result_body["outcome"] = session.outcome;
        b.deliver(n.sender, n.id, DeliveryKind::ApprovalResult, std::move(result_body));
    }
    return {b.take(), session};
}

void check_unique_goals(const std::vector<Goal>& goals) {
    std::set<std::string> seen;
    for (const auto& g : goals) {
        if (g.label.empty()) fail(ErrorCode::InvalidRequest, "goal label must not be empty");
        if (!seen.insert(g.label).second) fail(ErrorCode::InvalidRequest, "duplicate goal label '" + g.label + "'");
    }
}

Decision handle(const State& s, const CreateTask& c) {
    const auto& creator = active_participant(s, c.creator);
    if (creator.role != Role::Expert) fail(ErrorCode::RoleMismatch, "only experts create tasks");
    const auto& circ = circle(s, c.circle);
    if (!circ.experts.contains(creator.id)) {
        fail(ErrorCode::NotCircleMember, "'" + creator.id + "' is not an expert of '" + circ.id + "'");
    }
    participant(s, c.patient);
    if (!circ.patients.contains(c.patient)) {
        fail(ErrorCode::NotCircleMember, "'" + c.patient + "' is not a patient of '" + circ.id + "'");
    }
    check_unique_goals(c.goals);
    EventBuilder b(s);
    Task t;
    t.id = b.next_task_id();
    t.circle = circ.id;
    t.patient = c.patient;
    t.created_by = creator.id;
    t.domain = creator.domain.value_or("");
    t.instructions = c.instructions;
    t.schedule = c.schedule;
    t.goals = c.goals;
    for (auto& g : t.goals) g.reached = false;
    b.emit(event_kind::TaskCreated, Json{{"task", t}});
    return {b.take(), t};
}

Decision handle(const State& s, const ApplyTaskChange& c) {
    const auto& editor = active_participant(s, c.editor);
    const Task& current = task(s, c.task_id);
    const auto& circ = circle(s, current.circle);
    if (editor.role != Role::Expert) fail(ErrorCode::RoleMismatch, "only experts change tasks");
    if (!circ.experts.contains(editor.id)) {
        fail(ErrorCode::NotCircleMember, "'" + editor.id + "' is not an expert of '" + circ.id + "'");
    }
    if (current.status != TaskStatus::Active) fail(ErrorCode::TaskNotActive, "task '" + current.id + "' is not active");

    Task next = current;
    if (c.diff.instructions) next.instructions = *c.diff.instructions;
    if (c.diff.schedule) next.schedule = c.diff.schedule;
    if (c.diff.goals) {
        check_unique_goals(*c.diff.goals);
        next.goals = *c.diff.goals;
        for (auto& g : next.goals) {
            const Goal* before = current.find_goal(g.label);
            // reached only ever goes false -> true, and only through the patient
            g.reached = before && before->reached;
        }
    }
    if (c.diff.status) next.status = *c.diff.status;
    ++next.version;

    EventBuilder b(s);
    const NotificationId nid = "n" + std::to_string(s.counters.notifications + 1);
    TaskChange change{current.id, editor.id, c.diff, c.notify_patient, next.version, nid};
    b.emit(event_kind::TaskChanged, Json{{"change", change}, {"task", next}});

    const auto& spec = type_spec(s, c.notify_patient ? "T3" : "T4");
    Payload payload{"task " + current.id + " changed to version " + std::to_string(next.version),
                    Attachment{"task_change", current.id + "@" + std::to_string(next.version)}};
    route(b, RouteRequest{editor.id, &circ, &spec, payload, std::set<ParticipantId>{current.patient}, true});
    return {b.take(), change};
}

Decision handle(const State& s, const ReportProgress& c) {
    const auto& patient = active_participant(s, c.patient);
    const Task& t = task(s, c.task_id);
    if (t.patient != patient.id) fail(ErrorCode::NotTaskOwner, "'" + patient.id + "' does not own '" + t.id + "'");
    const auto& circ = circle(s, t.circle);

    EventBuilder b(s);
    ProgressReport report{b.next_report_id(), t.id, patient.id, c.metrics,
                          "n" + std::to_string(s.counters.notifications + 1)};
    Json rendered = Json::object();
    for (const auto& m : c.metrics) std::visit([&](const auto& v) { rendered[m.name] = v; }, m.value);
    Payload payload{canonical(rendered), Attachment{"report", report.id}};
    check_payload(payload);
    b.emit(event_kind::ProgressReported, Json{{"report", report}});
    auto routed = route(b, RouteRequest{patient.id, &circ, &type_spec(s, "T5"), payload, std::nullopt, false});
    return {b.take(), routed.notification};
}

Decision handle(const State& s, const RecordGoalReached& c) {
    const auto& patient = active_participant(s, c.patient);
    const Task& t = task(s, c.task_id);
    if (t.patient != patient.id) fail(ErrorCode::NotTaskOwner, "'" + patient.id + "' does not own '" + t.id + "'");
    const Goal* goal = t.find_goal(c.goal_label);
    if (!goal) fail(ErrorCode::UnknownGoal, "task '" + t.id + "' has no goal '" + c.goal_label + "'");
    if (goal->reached) fail(ErrorCode::GoalAlreadyReached, "goal '" + c.goal_label + "' is already reached");
    const auto& circ = circle(s, t.circle);

    EventBuilder b(s);
    b.emit(event_kind::GoalReached, Json{{"task_id", t.id}, {"label", goal->label}});
    Payload payload{"goal reached: " + goal->label, Attachment{"goal", t.id + "#" + goal->label}};
    auto routed = route(b, RouteRequest{patient.id, &circ, &type_spec(s, "T6"), payload, std::nullopt, false});
    return {b.take(), routed.notification};
}

Decision handle(const State& s, const RegisterNotificationType& c) {
    s.registry.check_insertable(c.spec);
    EventBuilder b(s);
    b.emit(event_kind::TypeRegistered, Json{{"spec", c.spec}});
    auto types = s.registry.all();
    types.push_back(c.spec);
    return {b.take(), Json{{"types", types}}};
}

Decision handle(const State& s, const AckMailbox& c) {
    if (!s.mailboxes.contains(c.mailbox)) fail(ErrorCode::UnknownMailbox, "no mailbox for '" + c.mailbox + "'");
    const auto head = s.mailboxes.head(c.mailbox);
    if (c.up_to_seq > head) {
        fail(ErrorCode::SeqBeyondHead,
             "ack " + std::to_string(c.up_to_seq) + " beyond head " + std::to_string(head));
    }
    Cursor cursor = s.mailboxes.cursor(c.mailbox);
    EventBuilder b(s);
    if (c.up_to_seq > cursor.last_acked_seq) {
        b.emit(event_kind::DeliveryAcked, Json{{"mailbox", c.mailbox}, {"up_to_seq", c.up_to_seq}});
        cursor.last_acked_seq = c.up_to_seq;
    }
    return {b.take(), cursor};
}

} // namespace

Decision Coordinator::decide(const Command& command) const {
    return std::visit([&](const auto& c) { return handle(state_, c); }, command);
}

void Coordinator::commit(const Decision& decision) {
    for (const auto& e : decision.events) apply(state_, e);
}

Json Coordinator::execute(const Command& command) {
    Decision d = decide(command);
    commit(d);
    journal_.insert(journal_.end(), d.events.begin(), d.events.end());
    return std::move(d.result);
}

Participant Coordinator::register_participant(Role role, std::optional<std::string> domain, std::string display_name) {
    return execute(RegisterParticipant{role, std::move(domain), std::move(display_name)}).get<Participant>();
}

CareCircle Coordinator::create_circle(std::set<ParticipantId> experts, std::set<ParticipantId> patients) {
    return execute(CreateCircle{std::move(experts), std::move(patients)}).get<CareCircle>();
}

CareCircle Coordinator::add_member(const CircleId& circle, const ParticipantId& participant) {
    return execute(AddCircleMember{circle, participant}).get<CareCircle>();
}

RoutingOutcome Coordinator::submit_notification(const ParticipantId& sender, const CircleId& circle,
                                                const TypeCode& type_code, Payload payload) {
    return execute(SubmitNotification{sender, circle, type_code, std::move(payload)}).get<RoutingOutcome>();
}

ApprovalSession Coordinator::respond_approval(const ParticipantId& expert, const NotificationId& notification,
                                              Verdict verdict) {
    return execute(RespondApproval{expert, notification, verdict}).get<ApprovalSession>();
}

Task Coordinator::create_task(const ParticipantId& creator, const CircleId& circle, const ParticipantId& patient,
                              std::vector<std::string> instructions, std::vector<Goal> goals,
                              std::optional<Schedule> schedule) {
    return execute(CreateTask{creator, circle, patient, std::move(instructions), std::move(schedule), std::move(goals)})
        .get<Task>();
}

TaskChange Coordinator::apply_task_change(const ParticipantId& editor, const TaskId& task, TaskDiff diff,
                                          bool notify_patient) {
    return execute(ApplyTaskChange{editor, task, std::move(diff), notify_patient}).get<TaskChange>();
}

Notification Coordinator::report_progress(const ParticipantId& patient, const TaskId& task, std::vector<Metric> metrics) {
    return execute(ReportProgress{patient, task, std::move(metrics)}).get<Notification>();
}

Notification Coordinator::record_goal_reached(const ParticipantId& patient, const TaskId& task,
                                              const std::string& goal_label) {
    return execute(RecordGoalReached{patient, task, goal_label}).get<Notification>();
}

std::vector<NotificationTypeSpec> Coordinator::register_notification_type(const NotificationTypeSpec& spec) {
    return execute(RegisterNotificationType{spec}).at("types").get<std::vector<NotificationTypeSpec>>();
}

Cursor Coordinator::ack(const ParticipantId& mailbox, std::uint64_t up_to_seq) {
    return execute(AckMailbox{mailbox, up_to_seq}).get<Cursor>();
}

} // namespace cm
