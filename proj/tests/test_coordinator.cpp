#include <doctest.h>

#include "cm/error.hpp"
#include "fixtures.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace cm;
using test::CareTeam;
using test::text;

namespace {

template <typename F>
ErrorCode error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::NotFound;
}

} // namespace

TEST_CASE("register_participant") {
    Coordinator core;
    auto ana = core.register_participant(Role::Expert, "nutrition", "Ana");
    CHECK(ana.role == Role::Expert);
    CHECK(ana.domain == "nutrition");
    auto pat = core.register_participant(Role::EndUser, std::nullopt, "Pat");
    CHECK(pat.role == Role::EndUser);
    CHECK_FALSE(pat.domain);
    CHECK(ana.id != pat.id);

    CHECK(error_of([&] { core.register_participant(Role::Expert, std::nullopt, "Bo"); }) == ErrorCode::DomainMissing);
    CHECK(error_of([&] { core.register_participant(Role::EndUser, "coach", "Q"); }) == ErrorCode::DomainForbidden);
    CHECK(core.state().participants.size() == 2);
}

TEST_CASE("circle membership") {
    CareTeam team;
    auto extra = team.core.register_participant(Role::Expert, "psychology", "Di");
    auto c = team.core.add_member(team.circle.id, extra.id);
    CHECK(c.experts.contains(extra.id));
    CHECK(error_of([&] { team.core.add_member(team.circle.id, extra.id); }) == ErrorCode::AlreadyMember);
    CHECK(error_of([&] { team.core.create_circle({team.patient.id}, {}); }) == ErrorCode::RoleMismatch);
    CHECK(error_of([&] { team.core.add_member("c99", extra.id); }) == ErrorCode::UnknownCircle);
}

TEST_CASE("submit_notification routing") {
    CareTeam team;

    SUBCASE("T1 reaches the other experts only") {
        auto out = team.core.submit_notification(team.e1.id, team.circle.id, "T1", text("decision"));
        CHECK(out.state == NotificationState::Routed);
        CHECK(out.delivery_count == 2);
        CHECK(team.count(team.e2.id, out.notification_id, DeliveryKind::Direct) == 1);
        CHECK(team.count(team.e3.id, out.notification_id, DeliveryKind::Direct) == 1);
        CHECK(team.mailbox(team.patient.id).empty());
        CHECK(team.mailbox(team.e1.id).empty());
    }

    SUBCASE("T2 waits for approval") {
        auto out = team.core.submit_notification(team.e1.id, team.circle.id, "T2", text("new diet"));
        CHECK(out.state == NotificationState::AwaitingApproval);
        CHECK(out.delivery_count == 2);
        CHECK(team.count(team.e2.id, out.notification_id, DeliveryKind::ApprovalRequest) == 1);
        CHECK(team.count(team.e3.id, out.notification_id, DeliveryKind::ApprovalRequest) == 1);
        CHECK(team.mailbox(team.patient.id).empty());
        const auto& session = team.core.state().sessions.at(out.notification_id);
        CHECK(session.required_approvers() == std::set<ParticipantId>{team.e2.id, team.e3.id});
        CHECK(session.outcome == SessionOutcome::Open);
    }

    SUBCASE("T6 from the patient reaches every expert") {
        auto out = team.core.submit_notification(team.patient.id, team.circle.id, "T6", text("goal"));
        CHECK(out.delivery_count == 3);
        for (const auto& e : {team.e1.id, team.e2.id, team.e3.id}) {
            CHECK(team.count(e, out.notification_id, DeliveryKind::Direct) == 1);
        }
    }

    SUBCASE("errors") {
        CHECK(error_of([&] { team.core.submit_notification(team.patient.id, team.circle.id, "T1", text("x")); }) ==
              ErrorCode::RoleMismatch);
        CHECK(error_of([&] { team.core.submit_notification(team.e1.id, team.circle.id, "T9", text("x")); }) ==
              ErrorCode::UnknownType);
        auto outsider = team.core.register_participant(Role::Expert, "coach", "Out");
        CHECK(error_of([&] { team.core.submit_notification(outsider.id, team.circle.id, "T1", text("x")); }) ==
              ErrorCode::NotCircleMember);
        CHECK(error_of([&] {
                  team.core.submit_notification(team.e1.id, team.circle.id, "T1", text(std::string(kMaxPayloadBytes + 1, 'a')));
              }) == ErrorCode::PayloadTooLarge);
        CHECK_NOTHROW(team.core.submit_notification(team.e1.id, team.circle.id, "T1", text(std::string(kMaxPayloadBytes, 'a'))));
    }
}

TEST_CASE("T2 needs another expert") {
    CareTeam solo(1);
    CHECK(error_of([&] { solo.core.submit_notification(solo.e1.id, solo.circle.id, "T2", text("x")); }) ==
          ErrorCode::NoApproversAvailable);
    CHECK(error_of([&] { solo.core.submit_notification(solo.e1.id, solo.circle.id, "T1", text("x")); }) ==
          ErrorCode::NoRecipients);
    CHECK(solo.core.state().notifications.empty());
}

TEST_CASE("patient may not notify a circle without experts") {
    Coordinator core;
    auto p = core.register_participant(Role::EndUser, std::nullopt, "Pat");
    auto c = core.create_circle({}, {p.id});
    CHECK(error_of([&] { core.submit_notification(p.id, c.id, "T5", text("x")); }) == ErrorCode::CircleHasNoExperts);
}

TEST_CASE("respond_approval") {
    SUBCASE("two approvers, both OK: patient delivery on the second OK") {
        CareTeam team;
        auto n = team.core.submit_notification(team.e1.id, team.circle.id, "T2", text("new plan")).notification_id;
        auto s1 = team.core.respond_approval(team.e2.id, n, Verdict::OK);
        CHECK(s1.outcome == SessionOutcome::Open);
        CHECK(team.mailbox(team.patient.id).empty());
        auto s2 = team.core.respond_approval(team.e3.id, n, Verdict::OK);
        CHECK(s2.outcome == SessionOutcome::AllApproved);
        CHECK(team.count(team.patient.id, n, DeliveryKind::Direct) == 1);
        CHECK(team.count(team.e1.id, n, DeliveryKind::ApprovalResult) == 1);
        CHECK(team.core.state().notifications.at(n).state == NotificationState::Delivered);
    }

    SUBCASE("partial quorum stays open") {
        CareTeam team;
        auto extra = team.core.register_participant(Role::Expert, "psychology", "Di");
        team.core.add_member(team.circle.id, extra.id);
        auto n = team.core.submit_notification(team.e1.id, team.circle.id, "T2", text("x")).notification_id;
        auto s = team.core.respond_approval(team.e2.id, n, Verdict::OK);
        CHECK(s.verdicts.size() == 3);
        CHECK(s.outcome == SessionOutcome::Open);
        CHECK(team.mailbox(team.patient.id).empty());
    }

    SUBCASE("a single reject closes the session and tells the sender") {
        CareTeam team;
        auto n = team.core.submit_notification(team.e1.id, team.circle.id, "T2", text("x")).notification_id;
        auto s = team.core.respond_approval(team.e2.id, n, Verdict::Reject);
        CHECK(s.outcome == SessionOutcome::Rejected);
        CHECK(team.core.state().notifications.at(n).state == NotificationState::Rejected);
        CHECK(team.count(team.e1.id, n, DeliveryKind::RejectionNotice) == 1);
        CHECK(error_of([&] { team.core.respond_approval(team.e3.id, n, Verdict::OK); }) == ErrorCode::SessionClosed);
        CHECK(team.mailbox(team.patient.id).empty());
    }

    SUBCASE("errors") {
        CareTeam team;
        auto n = team.core.submit_notification(team.e1.id, team.circle.id, "T2", text("x")).notification_id;
        team.core.respond_approval(team.e2.id, n, Verdict::OK);
        CHECK(error_of([&] { team.core.respond_approval(team.e2.id, n, Verdict::OK); }) == ErrorCode::DuplicateResponse);
        CHECK(error_of([&] { team.core.respond_approval(team.e2.id, n, Verdict::Reject); }) == ErrorCode::DuplicateResponse);
        CHECK(error_of([&] { team.core.respond_approval(team.e1.id, n, Verdict::OK); }) == ErrorCode::NotAnApprover);
        CHECK(error_of([&] { team.core.respond_approval(team.patient.id, n, Verdict::OK); }) == ErrorCode::NotAnApprover);
        CHECK(error_of([&] { team.core.respond_approval(team.e2.id, "n42", Verdict::OK); }) ==
              ErrorCode::UnknownNotification);
        auto t1 = team.core.submit_notification(team.e1.id, team.circle.id, "T1", text("x")).notification_id;
        CHECK(error_of([&] { team.core.respond_approval(team.e2.id, t1, Verdict::OK); }) == ErrorCode::NotAnApprover);
    }
}

namespace {

// Independent reference for the unanimity rule with fail-fast rejection.
struct ReferenceRun {
    SessionOutcome outcome = SessionOutcome::Open;
    std::vector<std::optional<ErrorCode>> errors;
    int patient_deliveries = 0;
    int rejection_notices = 0;
};

ReferenceRun reference(const std::vector<Verdict>& verdicts, const std::vector<int>& order) {
    ReferenceRun r;
    int oks = 0;
    for (int i : order) {
        if (r.outcome != SessionOutcome::Open) {
            r.errors.push_back(ErrorCode::SessionClosed);
            continue;
        }
        r.errors.push_back(std::nullopt);
        if (verdicts[i] == Verdict::Reject) {
            r.outcome = SessionOutcome::Rejected;
            r.rejection_notices = 1;
        } else if (++oks == static_cast<int>(verdicts.size())) {
            r.outcome = SessionOutcome::AllApproved;
            r.patient_deliveries = 1;
        }
    }
    return r;
}

ReferenceRun engine(const std::vector<Verdict>& verdicts, const std::vector<int>& order) {
    Coordinator core;
    auto sender = core.register_participant(Role::Expert, "lead", "S");
    std::vector<Participant> approvers;
    std::set<ParticipantId> experts{sender.id};
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        approvers.push_back(core.register_participant(Role::Expert, "d" + std::to_string(i), "A"));
        experts.insert(approvers.back().id);
    }
    auto patient = core.register_participant(Role::EndUser, std::nullopt, "P");
    auto circle = core.create_circle(experts, {patient.id});
    auto n = core.submit_notification(sender.id, circle.id, "T2", text("plan")).notification_id;

    ReferenceRun r;
    for (int i : order) {
        try {
            core.respond_approval(approvers[i].id, n, verdicts[i]);
            r.errors.push_back(std::nullopt);
        } catch (const Error& e) {
            r.errors.push_back(e.code());
        }
    }
    r.outcome = core.state().sessions.at(n).outcome;
    for (const auto& d : core.state().mailboxes.deliveries(patient.id)) r.patient_deliveries += d.notification_id == n;
    for (const auto& d : core.state().mailboxes.deliveries(sender.id)) {
        r.rejection_notices += d.kind == DeliveryKind::RejectionNotice;
    }
    return r;
}

} // namespace

TEST_CASE("approval outcomes match the exhaustive reference for k <= 3") {
    int cases = 0;
    for (int k = 1; k <= 3; ++k) {
        for (int mask = 0; mask < (1 << k); ++mask) {
            std::vector<Verdict> verdicts;
            for (int i = 0; i < k; ++i) verdicts.push_back((mask >> i) & 1 ? Verdict::Reject : Verdict::OK);
            std::vector<int> order(k);
            std::iota(order.begin(), order.end(), 0);
            do {
                auto want = reference(verdicts, order);
                auto got = engine(verdicts, order);
                CAPTURE(k);
                CAPTURE(mask);
                CHECK(got.outcome == want.outcome);
                CHECK(got.errors == want.errors);
                CHECK(got.patient_deliveries == want.patient_deliveries);
                CHECK(got.rejection_notices == want.rejection_notices);
                ++cases;
            } while (std::next_permutation(order.begin(), order.end()));
        }
    }
    // sum over k of 2^k * k!
    CHECK(cases == 2 * 1 + 4 * 2 + 8 * 6);
}

TEST_CASE("outcome depends only on the verdict multiset") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng() % 4);
        std::vector<Verdict> verdicts;
        for (int i = 0; i < k; ++i) verdicts.push_back(rng() % 3 == 0 ? Verdict::Reject : Verdict::OK);
        std::vector<int> order(k);
        std::iota(order.begin(), order.end(), 0);
        const auto first = engine(verdicts, order).outcome;
        std::shuffle(order.begin(), order.end(), rng);
        CHECK(engine(verdicts, order).outcome == first);
    }
}

TEST_CASE("apply_task_change") {
    CareTeam team;
    auto task = team.core.create_task(team.e1.id, team.circle.id, team.patient.id, {"walk 30 min"},
                                      {Goal{"5k", "run 5 km", false}});
    CHECK(task.version == 1);
    CHECK(task.domain == "nutrition");

    SUBCASE("notify_patient=true emits T3 to the patient") {
        auto change = team.core.apply_task_change(team.e1.id, task.id, TaskDiff{{{"walk 45 min"}}, {}, {}, {}}, true);
        CHECK(change.version == 2);
        const auto& pm = team.mailbox(team.patient.id);
        REQUIRE(pm.size() == 1);
        CHECK(pm[0].notification_id == change.notification_id);
        CHECK(pm[0].body.at("payload").at("attachment").at("ref") == task.id + "@2");
        CHECK(team.core.state().notifications.at(change.notification_id).type_code == "T3");
        CHECK(team.core.state().tasks.at(task.id).instructions == std::vector<std::string>{"walk 45 min"});
    }

    SUBCASE("notify_patient=false informs the peers but not the patient") {
        auto change = team.core.apply_task_change(team.e2.id, task.id, TaskDiff{{{"swim"}}, {}, {}, {}}, false);
        CHECK(team.mailbox(team.patient.id).empty());
        CHECK(team.count(team.e1.id, change.notification_id, DeliveryKind::Direct) == 1);
        CHECK(team.count(team.e3.id, change.notification_id, DeliveryKind::Direct) == 1);
        CHECK(team.mailbox(team.e2.id).empty());
        CHECK(team.core.state().notifications.at(change.notification_id).type_code == "T4");
    }

    SUBCASE("empty diff still bumps the version and routes") {
        auto before = team.core.state().tasks.at(task.id);
        auto change = team.core.apply_task_change(team.e1.id, task.id, TaskDiff{}, true);
        auto after = team.core.state().tasks.at(task.id);
        CHECK(after.version == before.version + 1);
        after.version = before.version;
        CHECK(after == before);
        CHECK(team.count(team.patient.id, change.notification_id, DeliveryKind::Direct) == 1);
    }

    SUBCASE("goal replacement keeps reached goals reached") {
        team.core.record_goal_reached(team.patient.id, task.id, "5k");
        team.core.apply_task_change(team.e1.id, task.id,
                                    TaskDiff{{}, {}, std::vector<Goal>{{"5k", "again", false}, {"10k", "next", true}}, {}},
                                    false);
        const auto& t = team.core.state().tasks.at(task.id);
        CHECK(t.find_goal("5k")->reached);
        CHECK_FALSE(t.find_goal("10k")->reached);
    }

    SUBCASE("errors") {
        auto outsider = team.core.register_participant(Role::Expert, "coach", "Out");
        CHECK(error_of([&] { team.core.apply_task_change(outsider.id, task.id, TaskDiff{}, true); }) ==
              ErrorCode::NotCircleMember);
        team.core.apply_task_change(team.e1.id, task.id, TaskDiff{{}, {}, {}, TaskStatus::Completed}, true);
        CHECK(error_of([&] { team.core.apply_task_change(team.e1.id, task.id, TaskDiff{}, true); }) ==
              ErrorCode::TaskNotActive);
    }
}

TEST_CASE("report_progress") {
    CareTeam team;
    auto task = team.core.create_task(team.e1.id, team.circle.id, team.patient.id, {"run"}, {});
    auto n = team.core.report_progress(team.patient.id, task.id, {Metric{"distance_km", 5.0}});
    CHECK(n.type_code == "T5");
    for (const auto& e : {team.e1.id, team.e2.id, team.e3.id}) CHECK(team.count(e, n.id, DeliveryKind::Direct) == 1);
    CHECK(team.core.state().reports.size() == 1);
    CHECK(team.core.state().reports.begin()->second.notification_id == n.id);

    auto other = team.core.register_participant(Role::EndUser, std::nullopt, "Other");
    team.core.add_member(team.circle.id, other.id);
    CHECK(error_of([&] { team.core.report_progress(other.id, task.id, {}); }) == ErrorCode::NotTaskOwner);
}

TEST_CASE("sequential reports arrive in submission order") {
    CareTeam team;
    auto task = team.core.create_task(team.e1.id, team.circle.id, team.patient.id, {"run"}, {});
    std::vector<NotificationId> submitted;
    for (int i = 0; i < 25; ++i) {
        submitted.push_back(team.core.report_progress(team.patient.id, task.id, {Metric{"lap", double(i)}}).id);
    }
    for (const auto& e : {team.e1.id, team.e2.id, team.e3.id}) {
        std::vector<NotificationId> seen;
        for (const auto& d : team.mailbox(e)) seen.push_back(d.notification_id);
        CHECK(seen == submitted);
    }
}

TEST_CASE("record_goal_reached") {
    CareTeam team;
    auto task = team.core.create_task(team.e1.id, team.circle.id, team.patient.id, {"run"},
                                      {Goal{"g", "first 5k", false}});
    auto n = team.core.record_goal_reached(team.patient.id, task.id, "g");
    CHECK(n.type_code == "T6");
    CHECK(team.core.state().tasks.at(task.id).goals[0].reached);
    for (const auto& e : {team.e1.id, team.e2.id, team.e3.id}) CHECK(team.count(e, n.id, DeliveryKind::Direct) == 1);
    CHECK(error_of([&] { team.core.record_goal_reached(team.patient.id, task.id, "g"); }) ==
          ErrorCode::GoalAlreadyReached);
    CHECK(error_of([&] { team.core.record_goal_reached(team.patient.id, task.id, "nope"); }) == ErrorCode::UnknownGoal);
}

TEST_CASE("Routed becomes Delivered once every direct delivery is acked") {
    CareTeam team;
    auto out = team.core.submit_notification(team.e1.id, team.circle.id, "T1", text("x"));
    const auto& n = [&]() -> const Notification& { return team.core.state().notifications.at(out.notification_id); };
    CHECK(n().state == NotificationState::Routed);
    team.core.ack(team.e2.id, 1);
    CHECK(n().state == NotificationState::Routed);
    team.core.ack(team.e3.id, 1);
    CHECK(n().state == NotificationState::Delivered);
}

TEST_CASE("decide is pure and commit reproduces execute") {
    CareTeam team;
    const auto before = team.core.state().canonical_text();
    auto d = team.core.decide(SubmitNotification{team.e1.id, team.circle.id, "T2", text("x")});
    CHECK(team.core.state().canonical_text() == before);
    REQUIRE(d.events.size() == 3);
    CHECK(d.events[0].seq == team.core.state().head + 1);
    CHECK(d.events[0].kind == "NotificationSubmitted");
    CHECK(d.events[1].kind == "DeliveryEnqueued");
}
