#include "cm/mailbox.hpp"

#include "cm/error.hpp"
#include "cm/json_fields.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace cm {

namespace {

constexpr std::array kKinds = {
    std::pair{DeliveryKind::Direct, "Direct"},
    std::pair{DeliveryKind::ApprovalRequest, "ApprovalRequest"},
    std::pair{DeliveryKind::ApprovalResult, "ApprovalResult"},
    std::pair{DeliveryKind::RejectionNotice, "RejectionNotice"},
};

} // namespace

void to_json(Json& j, DeliveryKind v) {
    for (const auto& [k, n] : kKinds) {
        if (k == v) j = n;
    }
}

void from_json(const Json& j, DeliveryKind& v) {
    if (j.is_string()) {
        for (const auto& [k, n] : kKinds) {
            if (j.get_ref<const std::string&>() == n) {
                v = k;
                return;
            }
        }
    }
    fail(ErrorCode::InvalidRequest, "unknown delivery kind " + j.dump());
}

void to_json(Json& j, const Delivery& v) {
    j = Json{{"delivery_id", v.delivery_id},
             {"mailbox", v.mailbox},
             {"seq", v.seq},
             {"notification_id", v.notification_id},
             {"kind", v.kind},
             {"body", v.body},
             {"acked", v.acked}};
}

void from_json(const Json& j, Delivery& v) {
    v.delivery_id = field<std::string>(j, "delivery_id");
    v.mailbox = field<std::string>(j, "mailbox");
    v.seq = field<std::uint64_t>(j, "seq");
    v.notification_id = field<std::string>(j, "notification_id");
    v.kind = field<DeliveryKind>(j, "kind");
    v.body = field_or<Json>(j, "body", Json::object());
    v.acked = field_or<bool>(j, "acked", false);
}

void to_json(Json& j, const Cursor& v) {
    j = Json{{"mailbox", v.mailbox}, {"last_acked_seq", v.last_acked_seq}};
}

void from_json(const Json& j, Cursor& v) {
    v.mailbox = field<std::string>(j, "mailbox");
    v.last_acked_seq = field<std::uint64_t>(j, "last_acked_seq");
}

MailboxStore::Box& MailboxStore::box(const ParticipantId& mailbox) {
    auto it = boxes_.find(mailbox);
    if (it == boxes_.end()) fail(ErrorCode::UnknownMailbox, "no mailbox for '" + mailbox + "'");
    return it->second;
}

const MailboxStore::Box& MailboxStore::box(const ParticipantId& mailbox) const {
    auto it = boxes_.find(mailbox);
    if (it == boxes_.end()) fail(ErrorCode::UnknownMailbox, "no mailbox for '" + mailbox + "'");
    return it->second;
}

void MailboxStore::create(const ParticipantId& mailbox) { boxes_.try_emplace(mailbox); }

std::uint64_t MailboxStore::head(const ParticipantId& mailbox) const { return box(mailbox).log.size(); }

std::uint64_t MailboxStore::enqueue(Delivery delivery) {
    Box& b = box(delivery.mailbox);
    const auto key = std::tuple{delivery.notification_id, delivery.kind};
    if (auto it = b.index.find(key); it != b.index.end()) return it->second;

    const std::uint64_t seq = b.log.size() + 1;
    if (delivery.seq != 0 && delivery.seq != seq) {
        fail(ErrorCode::CorruptRecord, "delivery " + delivery.delivery_id + " expects seq " +
                                           std::to_string(delivery.seq) + " but mailbox head is " +
                                           std::to_string(seq - 1));
    }
    delivery.seq = seq;
    delivery.acked = seq <= b.cursor;
    b.index.emplace(key, seq);
    b.log.push_back(std::move(delivery));
    return seq;
}

std::vector<Delivery> MailboxStore::poll(const ParticipantId& mailbox, std::uint64_t after_seq,
                                         std::size_t max_batch) const {
    const Box& b = box(mailbox);
    std::vector<Delivery> out;
    if (after_seq >= b.log.size()) return out;
    const std::size_t n = std::min<std::size_t>(max_batch, b.log.size() - after_seq);
    out.assign(b.log.begin() + static_cast<std::ptrdiff_t>(after_seq),
               b.log.begin() + static_cast<std::ptrdiff_t>(after_seq + n));
    return out;
}

MailboxStore::AckResult MailboxStore::ack(const ParticipantId& mailbox, std::uint64_t up_to_seq) {
    Box& b = box(mailbox);
    if (up_to_seq > b.log.size()) {
        fail(ErrorCode::SeqBeyondHead, "ack " + std::to_string(up_to_seq) + " beyond head " +
                                           std::to_string(b.log.size()) + " of '" + mailbox + "'");
    }
    AckResult result;
    for (std::uint64_t s = b.cursor + 1; s <= up_to_seq; ++s) {
        Delivery& d = b.log[s - 1];
        d.acked = true;
        result.newly_acked.push_back(d);
    }
    b.cursor = std::max(b.cursor, up_to_seq);
    result.cursor = Cursor{mailbox, b.cursor};
    return result;
}

Cursor MailboxStore::cursor(const ParticipantId& mailbox) const { return Cursor{mailbox, box(mailbox).cursor}; }

const std::vector<Delivery>& MailboxStore::deliveries(const ParticipantId& mailbox) const { return box(mailbox).log; }

const Delivery* MailboxStore::find(const ParticipantId& mailbox, const NotificationId& notification,
                                   DeliveryKind kind) const {
    const Box& b = box(mailbox);
    auto it = b.index.find(std::tuple{notification, kind});
    return it == b.index.end() ? nullptr : &b.log[it->second - 1];
}

Json MailboxStore::to_json() const {
    Json out = Json::object();
    for (const auto& [id, b] : boxes_) {
        out[id] = Json{{"cursor", b.cursor}, {"deliveries", b.log}};
    }
    return out;
}

MailboxStore MailboxStore::from_json(const Json& j) {
    MailboxStore store;
    for (const auto& [id, entry] : j.items()) {
        store.create(id);
        Box& b = store.boxes_.at(id);
        for (Delivery d : field<std::vector<Delivery>>(entry, "deliveries")) {
            const bool acked = d.acked;
            store.enqueue(std::move(d));
            b.log.back().acked = acked;
        }
        b.cursor = field<std::uint64_t>(entry, "cursor");
    }
    return store;
}

} // namespace cm
