#include "cm/stream.hpp"

#include <algorithm>

namespace cm {

Subscription::Subscription(ParticipantId mailbox, std::size_t capacity)
    : mailbox_(std::move(mailbox)), capacity_(capacity) {}

std::optional<Delivery> Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !buffer_.empty() || closed_; });
    if (buffer_.empty()) return std::nullopt;
    Delivery d = std::move(buffer_.front());
    buffer_.pop_front();
    return d;
}

std::optional<Delivery> Subscription::try_next() {
    std::lock_guard lock(mu_);
    if (buffer_.empty()) return std::nullopt;
    Delivery d = std::move(buffer_.front());
    buffer_.pop_front();
    return d;
}

bool Subscription::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

bool Subscription::overflowed() const {
    std::lock_guard lock(mu_);
    return overflowed_;
}

void Subscription::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::push(const Delivery& d) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return false;
        if (buffer_.size() >= capacity_) {
            closed_ = true;
            overflowed_ = true;
        } else {
            buffer_.push_back(d);
        }
    }
    cv_.notify_one();
    return !overflowed();
}

std::shared_ptr<Subscription> StreamHub::subscribe(const ParticipantId& mailbox, std::size_t capacity) {
    auto sub = std::make_shared<Subscription>(mailbox, capacity);
    std::lock_guard lock(mu_);
    auto& list = subs_[mailbox];
    std::erase_if(list, [](const auto& w) { return w.expired(); });
    list.push_back(sub);
    return sub;
}

void StreamHub::publish(const Delivery& d) {
    std::vector<std::shared_ptr<Subscription>> targets;
    {
        std::lock_guard lock(mu_);
        auto it = subs_.find(d.mailbox);
        if (it == subs_.end()) return;
        auto& list = it->second;
        for (auto w = list.begin(); w != list.end();) {
            auto sub = w->lock();
            if (!sub || sub->closed()) {
                w = list.erase(w);
                continue;
            }
            targets.push_back(std::move(sub));
            ++w;
        }
    }
    for (auto& sub : targets) sub->push(d);
}

void StreamHub::close_all() {
    std::lock_guard lock(mu_);
    for (auto& [_, list] : subs_) {
        for (auto& w : list) {
            if (auto sub = w.lock()) sub->close();
        }
    }
    subs_.clear();
}

std::size_t StreamHub::subscriber_count(const ParticipantId& mailbox) const {
    std::lock_guard lock(mu_);
    auto it = subs_.find(mailbox);
    if (it == subs_.end()) return 0;
    return static_cast<std::size_t>(
        std::count_if(it->second.begin(), it->second.end(), [](const auto& w) {
            auto s = w.lock();
            return s && !s->closed();
        }));
}

ResumableStream::ResumableStream(MailboxSource& source, ParticipantId mailbox, std::uint64_t after_seq)
    : source_(source), mailbox_(std::move(mailbox)), last_seq_(after_seq) {
    // Subscribe before reading the backlog so nothing falls between the two.
    live_ = source_.subscribe(mailbox_);
    refill_backlog();
}

bool ResumableStream::refill_backlog() {
    const std::uint64_t from = backlog_.empty() ? last_seq_ : backlog_.back().seq;
    auto batch = source_.poll(mailbox_, from, kDefaultMaxBatch);
    if (batch.empty()) {
        backlog_done_ = true;
        return false;
    }
    for (auto& d : batch) backlog_.push_back(std::move(d));
    return true;
}

std::optional<Delivery> ResumableStream::next(std::chrono::milliseconds timeout) {
    while (!backlog_done_ || !backlog_.empty()) {
        if (backlog_.empty() && !refill_backlog()) break;
        Delivery d = std::move(backlog_.front());
        backlog_.pop_front();
        if (d.seq <= last_seq_) continue;
        last_seq_ = d.seq;
        return d;
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        const auto left = deadline > now ? std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
                                         : std::chrono::milliseconds(0);
        auto d = live_->next(left);
        if (!d) return std::nullopt;
        if (d->seq <= last_seq_) continue;
        last_seq_ = d->seq;
        return d;
    }
}

bool ResumableStream::ended() const { return live_->closed(); }

void ResumableStream::close() { live_->close(); }

} // namespace cm
