#include "cm/coordinator.hpp"
#include "cm/error.hpp"
#include "cm/harness.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace cm::harness {

namespace {

/// Unanimity with fail-fast rejection, written from the rule alone.
struct Reference {
    enum class Outcome { Open, Approved, Rejected };

    std::size_t approvers;
    std::size_t oks = 0;
    Outcome outcome = Outcome::Open;

    /// "ok" or the error name the engine must produce.
    std::string respond(bool ok) {
        if (outcome != Outcome::Open) return "SessionClosed";
        if (!ok) {
            outcome = Outcome::Rejected;
        } else if (++oks == approvers) {
            outcome = Outcome::Approved;
        }
        return "ok";
    }
};

using DeliverySet = std::multiset<std::pair<std::string, std::string>>; // (role label, kind)

struct Case {
    std::vector<bool> verdicts; // per approver index
    std::vector<int> order;     // response order
};

std::string describe(const Case& c) {
    std::ostringstream o;
    o << "k=" << c.verdicts.size() << " verdicts=";
    for (bool v : c.verdicts) o << (v ? 'O' : 'R');
    o << " order=";
    for (int i : c.order) o << i;
    return o.str();
}

std::optional<std::string> check(const Case& c) {
    const int k = static_cast<int>(c.verdicts.size());
    Coordinator core;
    const auto sender = core.register_participant(Role::Expert, "coach", "sender").id;
    std::vector<ParticipantId> approvers;
    std::map<ParticipantId, std::string> label{{sender, "sender"}};
    for (int i = 0; i < k; ++i) {
        approvers.push_back(core.register_participant(Role::Expert, "nutrition", "a" + std::to_string(i)).id);
        label[approvers.back()] = "a" + std::to_string(i);
    }
    const auto patient = core.register_participant(Role::EndUser, std::nullopt, "patient").id;
    label[patient] = "patient";
    std::set<ParticipantId> experts(approvers.begin(), approvers.end());
    experts.insert(sender);
    const auto circle = core.create_circle(experts, {patient}).id;

    const auto n = core.submit_notification(sender, circle, "T2", Payload{"plan", std::nullopt}).notification_id;

    auto deliveries = [&] {
        DeliverySet got;
        for (const auto& [who, name] : label) {
            for (const auto& d : core.state().mailboxes.deliveries(who)) {
                if (d.notification_id == n) got.emplace(name, Json(d.kind).get<std::string>());
            }
        }
        return got;
    };
    auto patient_has_direct = [&] { return !core.state().mailboxes.deliveries(patient).empty(); };

    Reference ref{static_cast<std::size_t>(k)};
    for (std::size_t step = 0; step < c.order.size(); ++step) {
        const int who = c.order[step];
        const auto want = ref.respond(c.verdicts[who]);
        std::string got = "ok";
        try {
            core.respond_approval(approvers[who], n, c.verdicts[who] ? Verdict::OK : Verdict::Reject);
        } catch (const Error& e) {
            got = std::string(to_string(e.code()));
        }
        if (got != want) return "response " + std::to_string(step + 1) + ": engine " + got + ", reference " + want;
        const bool should = ref.outcome == Reference::Outcome::Approved;
        if (patient_has_direct() != should) {
            return "after response " + std::to_string(step + 1) + ": patient delivery " +
                   (should ? "missing" : "premature");
        }
    }

    DeliverySet want;
    for (int i = 0; i < k; ++i) want.emplace("a" + std::to_string(i), "ApprovalRequest");
    std::string state, outcome;
    switch (ref.outcome) {
    case Reference::Outcome::Approved:
        want.emplace("patient", "Direct");
        want.emplace("sender", "ApprovalResult");
        state = "Delivered";
        outcome = "AllApproved";
        break;
    case Reference::Outcome::Rejected:
        want.emplace("sender", "RejectionNotice");
        state = "Rejected";
        outcome = "Rejected";
        break;
    case Reference::Outcome::Open:
        return "reference left the session open";
    }
    if (deliveries() != want) return "delivery set differs";
    const auto engine_state = Json(core.state().notifications.at(n).state).get<std::string>();
    if (engine_state != state) return "notification state " + engine_state + ", reference " + state;
    const auto engine_outcome = Json(core.state().sessions.at(n).outcome).get<std::string>();
    if (engine_outcome != outcome) return "session outcome " + engine_outcome + ", reference " + outcome;
    return std::nullopt;
}

} // namespace

OracleReport oracle_check(int k_max) {
    if (k_max < 1 || k_max > 4) fail(ErrorCode::InvalidRequest, "k must be between 1 and 4");
    const auto start = std::chrono::steady_clock::now();
    OracleReport r;
    for (int k = 1; k <= k_max; ++k) {
        for (unsigned mask = 0; mask < (1u << k); ++mask) {
            Case c;
            for (int i = 0; i < k; ++i) c.verdicts.push_back(((mask >> i) & 1u) == 0);
            c.order.resize(k);
            std::iota(c.order.begin(), c.order.end(), 0);
            do {
                ++r.cases_per_k[k];
                ++r.total;
                if (auto m = check(c)) r.mismatches.push_back(describe(c) + ": " + *m);
            } while (std::next_permutation(c.order.begin(), c.order.end()));
        }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

Json OracleReport::to_json() const {
    Json per = Json::object();
    for (const auto& [k, n] : cases_per_k) per[std::to_string(k)] = n;
    return Json{{"cases_per_k", per}, {"total", total},    {"mismatches", mismatches},
                {"passed", passed()}, {"seconds", seconds}};
}

} // namespace cm::harness
