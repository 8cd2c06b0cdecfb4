#include "cm/state.hpp"

#include "cm/error.hpp"
#include "cm/json_fields.hpp"

namespace cm {

namespace {

[[noreturn]] void corrupt(const DomainEvent& e, const std::string& why) {
    fail(ErrorCode::CorruptRecord, "event " + std::to_string(e.seq) + " (" + e.kind + "): " + why);
}

template <typename Map>
auto& lookup(Map& m, const std::string& key, const DomainEvent& e) {
    auto it = m.find(key);
    if (it == m.end()) corrupt(e, "dangling reference '" + key + "'");
    return it->second;
}

void on_delivery_acked(State& s, const std::vector<Delivery>& acked) {
    for (const auto& d : acked) {
        if (d.kind != DeliveryKind::Direct) continue;
        auto it = s.notifications.find(d.notification_id);
        if (it == s.notifications.end()) continue;
        Notification& n = it->second;
        if (n.unacked_direct > 0) --n.unacked_direct;
        if (n.unacked_direct == 0 && n.state == NotificationState::Routed) n.state = NotificationState::Delivered;
    }
}

} // namespace

Json State::to_json() const {
    Json custom = Json::object();
    for (const auto& [code, spec] : registry.custom()) custom[code] = spec;
    Json history = Json::object();
    for (const auto& [id, changes] : task_history) history[id] = changes;
    return Json{
        {"head", head},
        {"counters",
         {{"participants", counters.participants},
          {"circles", counters.circles},
          {"notifications", counters.notifications},
          {"tasks", counters.tasks},
          {"reports", counters.reports},
          {"deliveries", counters.deliveries}}},
        {"participants", participants},
        {"circles", circles},
        {"custom_types", custom},
        {"notifications", notifications},
        {"sessions", sessions},
        {"tasks", tasks},
        {"task_history", history},
        {"reports", reports},
        {"mailboxes", mailboxes.to_json()},
    };
}

State State::from_json(const Json& j) {
    State s;
    s.head = field<LogicalTime>(j, "head");
    const Json& c = j.at("counters");
    s.counters = IdCounters{field<std::uint64_t>(c, "participants"), field<std::uint64_t>(c, "circles"),
                            field<std::uint64_t>(c, "notifications"), field<std::uint64_t>(c, "tasks"),
                            field<std::uint64_t>(c, "reports"), field<std::uint64_t>(c, "deliveries")};
    s.participants = field<std::map<ParticipantId, Participant>>(j, "participants");
    s.circles = field<std::map<CircleId, CareCircle>>(j, "circles");
    for (const auto& [_, spec] : j.at("custom_types").items()) s.registry.insert(spec.get<NotificationTypeSpec>());
    s.notifications = field<std::map<NotificationId, Notification>>(j, "notifications");
    s.sessions = field<std::map<NotificationId, ApprovalSession>>(j, "sessions");
    s.tasks = field<std::map<TaskId, Task>>(j, "tasks");
    s.task_history = field<std::map<TaskId, std::vector<TaskChange>>>(j, "task_history");
    s.reports = field<std::map<ReportId, ProgressReport>>(j, "reports");
    s.mailboxes = MailboxStore::from_json(j.at("mailboxes"));
    return s;
}

std::string State::canonical_text() const { return canonical(to_json()); }

void apply(State& s, const DomainEvent& e) {
    if (e.seq != s.head + 1) {
        corrupt(e, "expected seq " + std::to_string(s.head + 1));
    }
    const Json& b = e.body;
    try {
        if (e.kind == event_kind::ParticipantRegistered) {
            auto p = b.at("participant").get<Participant>();
            if (s.participants.contains(p.id)) corrupt(e, "duplicate participant " + p.id);
            s.mailboxes.create(p.id);
            s.participants.emplace(p.id, std::move(p));
            ++s.counters.participants;
        } else if (e.kind == event_kind::CircleCreated) {
            auto c = b.at("circle").get<CareCircle>();
            if (s.circles.contains(c.id)) corrupt(e, "duplicate circle " + c.id);
            s.circles.emplace(c.id, std::move(c));
            ++s.counters.circles;
        } else if (e.kind == event_kind::CircleMemberAdded) {
            auto& circle = lookup(s.circles, b.at("circle").get<std::string>(), e);
            const auto pid = b.at("participant").get<std::string>();
            const auto& p = lookup(s.participants, pid, e);
            (p.role == Role::Expert ? circle.experts : circle.patients).insert(pid);
        } else if (e.kind == event_kind::TypeRegistered) {
            s.registry.insert(b.at("spec").get<NotificationTypeSpec>());
        } else if (e.kind == event_kind::NotificationSubmitted) {
            auto n = b.at("notification").get<Notification>();
            if (s.notifications.contains(n.id)) corrupt(e, "duplicate notification " + n.id);
            if (auto it = b.find("approvers"); it != b.end()) {
                ApprovalSession session{n.id, {}, SessionOutcome::Open};
                for (const auto& a : *it) session.verdicts.emplace(a.get<std::string>(), Verdict::Pending);
                s.sessions.emplace(n.id, std::move(session));
            }
            s.notifications.emplace(n.id, std::move(n));
            ++s.counters.notifications;
        } else if (e.kind == event_kind::ApprovalRecorded) {
            auto& session = lookup(s.sessions, b.at("notification_id").get<std::string>(), e);
            auto& verdict = lookup(session.verdicts, b.at("expert").get<std::string>(), e);
            if (verdict != Verdict::Pending) corrupt(e, "verdict already recorded");
            verdict = b.at("verdict").get<Verdict>();
        } else if (e.kind == event_kind::SessionClosed) {
            const auto nid = b.at("notification_id").get<std::string>();
            auto& session = lookup(s.sessions, nid, e);
            auto& n = lookup(s.notifications, nid, e);
            session.outcome = b.at("outcome").get<SessionOutcome>();
            n.state = session.outcome == SessionOutcome::AllApproved ? NotificationState::Approved
                                                                     : NotificationState::Rejected;
        } else if (e.kind == event_kind::TaskCreated) {
            auto t = b.at("task").get<Task>();
            if (s.tasks.contains(t.id)) corrupt(e, "duplicate task " + t.id);
            s.tasks.emplace(t.id, std::move(t));
            ++s.counters.tasks;
        } else if (e.kind == event_kind::TaskChanged) {
            auto t = b.at("task").get<Task>();
            lookup(s.tasks, t.id, e) = t;
            s.task_history[t.id].push_back(b.at("change").get<TaskChange>());
        } else if (e.kind == event_kind::ProgressReported) {
            auto r = b.at("report").get<ProgressReport>();
            lookup(s.tasks, r.task_id, e);
            s.reports.emplace(r.id, std::move(r));
            ++s.counters.reports;
        } else if (e.kind == event_kind::GoalReached) {
            auto& t = lookup(s.tasks, b.at("task_id").get<std::string>(), e);
            const auto label = b.at("label").get<std::string>();
            auto it = std::find_if(t.goals.begin(), t.goals.end(), [&](const Goal& g) { return g.label == label; });
            if (it == t.goals.end()) corrupt(e, "unknown goal " + label);
            it->reached = true;
        } else if (e.kind == event_kind::DeliveryEnqueued) {
            auto d = b.at("delivery").get<Delivery>();
            const auto kind = d.kind;
            const auto nid = d.notification_id;
            s.mailboxes.enqueue(std::move(d));
            ++s.counters.deliveries;
            if (kind == DeliveryKind::Direct) {
                auto& n = lookup(s.notifications, nid, e);
                ++n.unacked_direct;
                if (n.state == NotificationState::Approved) n.state = NotificationState::Delivered;
            }
        } else if (e.kind == event_kind::DeliveryAcked) {
            auto result = s.mailboxes.ack(b.at("mailbox").get<std::string>(), b.at("up_to_seq").get<std::uint64_t>());
            on_delivery_acked(s, result.newly_acked);
        } else {
            corrupt(e, "unknown event kind");
        }
    } catch (const Json::exception& ex) {
        corrupt(e, ex.what());
    } catch (const Error& ex) {
        if (ex.code() == ErrorCode::CorruptRecord) throw;
        corrupt(e, ex.what());
    }
    s.head = e.seq;
}

State fold(std::span<const DomainEvent> events) {
    State s;
    for (const auto& e : events) apply(s, e);
    return s;
}

} // namespace cm
