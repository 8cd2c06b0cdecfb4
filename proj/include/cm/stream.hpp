#pragma once

#include "cm/mailbox.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace cm {

inline constexpr std::size_t kDefaultStreamBuffer = 4096;

/// One live push channel onto a mailbox. The producer never blocks: when the
/// buffer is full the subscription is closed and the consumer must resume
/// through poll.
class Subscription {
public:
    Subscription(ParticipantId mailbox, std::size_t capacity);

    const ParticipantId& mailbox() const { return mailbox_; }

    /// Waits up to timeout. Returns nullopt on timeout or once closed and drained.
    std::optional<Delivery> next(std::chrono::milliseconds timeout);
    std::optional<Delivery> try_next();

    bool closed() const;
    bool overflowed() const;
    void close();

    /// Producer side. Returns false if the subscription is (now) closed.
    bool push(const Delivery& d);

private:
    ParticipantId mailbox_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Delivery> buffer_;
    bool closed_ = false;
    bool overflowed_ = false;
};

/// Fan-out of committed deliveries to live subscribers. Any number of
/// subscriptions per mailbox; each receives every delivery.
class StreamHub {
public:
    std::shared_ptr<Subscription> subscribe(const ParticipantId& mailbox,
                                            std::size_t capacity = kDefaultStreamBuffer);
    void publish(const Delivery& d);
    void close_all();
    std::size_t subscriber_count(const ParticipantId& mailbox) const;

private:
    mutable std::mutex mu_;
    std::map<ParticipantId, std::vector<std::weak_ptr<Subscription>>> subs_;
};

/// Read side of a mailbox host (the in-process service, or a test double).
class MailboxSource {
public:
    virtual ~MailboxSource() = default;
    virtual std::vector<Delivery> poll(const ParticipantId& mailbox, std::uint64_t after_seq,
                                       std::size_t max_batch) const = 0;
    virtual std::shared_ptr<Subscription> subscribe(const ParticipantId& mailbox) = 0;
};

/// Backlog-then-live reader: subscribes first, drains everything after
/// `after_seq` by polling, then follows the live subscription, skipping
/// anything at or below the last yielded seq. This is the resume rule the
/// event-stream endpoint exposes.
class ResumableStream {
public:
    ResumableStream(MailboxSource& source, ParticipantId mailbox, std::uint64_t after_seq);

    /// Next delivery in seq order; nullopt on timeout or when the live
    /// subscription was closed (check `ended()`).
    std::optional<Delivery> next(std::chrono::milliseconds timeout);

    bool ended() const;
    std::uint64_t last_seq() const { return last_seq_; }
    void close();

private:
    bool refill_backlog();

    MailboxSource& source_;
    ParticipantId mailbox_;
    std::uint64_t last_seq_;
    std::shared_ptr<Subscription> live_;
    std::deque<Delivery> backlog_;
    bool backlog_done_ = false;
};

} // namespace cm
