#pragma once

#include "cm/commands.hpp"
#include "cm/coordinator.hpp"
#include "cm/event_store.hpp"
#include "cm/stream.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>

namespace cm {

struct ServiceOptions {
    std::size_t stream_buffer = kDefaultStreamBuffer;
    /// Advisory snapshot written every `snapshot_every` events when set.
    std::optional<std::filesystem::path> snapshot_path;
    std::uint64_t snapshot_every = kSnapshotInterval;
    /// Wall-clock milliseconds stamped into recorded_at; defaults to system_clock.
    std::function<std::int64_t()> clock;
};

/// The coordinator at run time: a single writer thread drains the command
/// queue, makes each command's events durable, folds them into the state and
/// only then pushes the resulting deliveries to live subscribers. Queries
/// read the state under a shared lock and never wait for the writer queue.
class Service : public MailboxSource {
public:
    /// Replays the log; throws CorruptRecord when it cannot.
    explicit Service(std::unique_ptr<EventLog> log, ServiceOptions options = {});
    ~Service() override;

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Runs a command through the queue and returns its result once durable.
    Json execute(Command command);
    std::future<Json> submit(Command command);

    std::vector<Delivery> poll(const ParticipantId& mailbox, std::uint64_t after_seq,
                               std::size_t max_batch = kDefaultMaxBatch) const override;
    std::shared_ptr<Subscription> subscribe(const ParticipantId& mailbox) override;

    template <typename F>
    auto read(F&& f) const {
        std::shared_lock lock(state_mu_);
        return f(core_.state());
    }

    std::string canonical_state() const;
    std::vector<DomainEvent> events(std::uint64_t from = 1) const { return log_->read_from(from); }
    std::uint64_t head() const { return log_->head(); }

    /// Stops accepting commands, finishes the queued ones and closes streams.
    void shutdown();
    /// Ends every live subscription; the commands keep flowing.
    void close_streams() { hub_.close_all(); }
    /// True after a storage failure; every later command fails.
    bool failed() const { return failed_.load(); }

private:
    struct Job {
        Command command;
        std::promise<Json> done;
    };

    void run();
    Json process(const Command& command);

    std::unique_ptr<EventLog> log_;
    ServiceOptions options_;
    Coordinator core_;
    mutable std::shared_mutex state_mu_;
    StreamHub hub_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<Job> queue_;
    bool stopping_ = false;
    std::atomic<bool> failed_{false};
    std::thread worker_;
};

} // namespace cm
