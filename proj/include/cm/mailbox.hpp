#pragma once

#include "cm/canonical.hpp"
#include "cm/types.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace cm {

enum class DeliveryKind { Direct, ApprovalRequest, ApprovalResult, RejectionNotice };

using DeliveryId = std::string;

inline constexpr std::size_t kDefaultMaxBatch = 100;

struct Delivery {
    DeliveryId delivery_id;
    ParticipantId mailbox;
    std::uint64_t seq = 0;
    NotificationId notification_id;
    DeliveryKind kind = DeliveryKind::Direct;
    Json body;
    bool acked = false;

    friend bool operator==(const Delivery&, const Delivery&) = default;
};

struct Cursor {
    ParticipantId mailbox;
    std::uint64_t last_acked_seq = 0;

    friend bool operator==(const Cursor&, const Cursor&) = default;
};

void to_json(Json& j, DeliveryKind v);
void from_json(const Json& j, DeliveryKind& v);
void to_json(Json& j, const Delivery& v);
void from_json(const Json& j, Delivery& v);
void to_json(Json& j, const Cursor& v);
void from_json(const Json& j, Cursor& v);

/// Per-participant delivery queues. Sequence numbers start at 1 per mailbox
/// and are never reused; nothing is removed on read or ack.
class MailboxStore {
public:
    struct AckResult {
        Cursor cursor;
        std::vector<Delivery> newly_acked;
    };

    void create(const ParticipantId& mailbox);
    bool contains(const ParticipantId& mailbox) const { return boxes_.contains(mailbox); }
    std::size_t size() const { return boxes_.size(); }

    std::uint64_t head(const ParticipantId& mailbox) const;

    /// Appends with the next seq. A delivery whose (notification, kind) is
    /// already in the mailbox is not duplicated; the existing seq is returned.
    /// A nonzero seq on input must equal the slot it lands in.
    std::uint64_t enqueue(Delivery delivery);

    /// Deliveries with seq > after_seq in ascending order, at most max_batch.
    std::vector<Delivery> poll(const ParticipantId& mailbox, std::uint64_t after_seq,
                               std::size_t max_batch = kDefaultMaxBatch) const;

    AckResult ack(const ParticipantId& mailbox, std::uint64_t up_to_seq);

    Cursor cursor(const ParticipantId& mailbox) const;
    const std::vector<Delivery>& deliveries(const ParticipantId& mailbox) const;
    const Delivery* find(const ParticipantId& mailbox, const NotificationId& notification,
                         DeliveryKind kind) const;

    Json to_json() const;
    static MailboxStore from_json(const Json& j);

    friend bool operator==(const MailboxStore&, const MailboxStore&) = default;

private:
    struct Box {
        std::vector<Delivery> log;
        std::uint64_t cursor = 0;
        std::map<std::tuple<NotificationId, DeliveryKind>, std::uint64_t> index;

        friend bool operator==(const Box&, const Box&) = default;
    };

    Box& box(const ParticipantId& mailbox);
    const Box& box(const ParticipantId& mailbox) const;

    std::map<ParticipantId, Box> boxes_;
};

} // namespace cm
