#pragma once

#include "cm/coordinator.hpp"

#include <string>
#include <vector>

namespace cm::test {

/// Three experts and one patient in one circle, the cast most examples use.
struct CareTeam {
    Coordinator core;
    Participant e1, e2, e3, patient;
    CareCircle circle;

    explicit CareTeam(int experts = 3) {
        e1 = core.register_participant(Role::Expert, "nutrition", "Ana");
        if (experts > 1) e2 = core.register_participant(Role::Expert, "coach", "Bo");
        if (experts > 2) e3 = core.register_participant(Role::Expert, "physician", "Cy");
        patient = core.register_participant(Role::EndUser, std::nullopt, "Pat");
        std::set<ParticipantId> ex{e1.id};
        if (experts > 1) ex.insert(e2.id);
        if (experts > 2) ex.insert(e3.id);
        circle = core.create_circle(ex, {patient.id});
    }

    const std::vector<Delivery>& mailbox(const ParticipantId& id) const {
        return core.state().mailboxes.deliveries(id);
    }

    std::size_t count(const ParticipantId& id, const NotificationId& n, DeliveryKind kind) const {
        std::size_t c = 0;
        for (const auto& d : mailbox(id)) c += (d.notification_id == n && d.kind == kind);
        return c;
    }
};

inline Payload text(std::string t) { return Payload{std::move(t), std::nullopt}; }

} // namespace cm::test
