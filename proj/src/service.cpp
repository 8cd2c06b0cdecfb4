#include "cm/service.hpp"

#include "cm/error.hpp"

#include <chrono>

namespace cm {

namespace {

std::int64_t wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

Service::Service(std::unique_ptr<EventLog> log, ServiceOptions options)
    : log_(std::move(log)), options_(std::move(options)), core_(replay(*log_)) {
    if (!options_.clock) options_.clock = wall_ms;
    worker_ = std::thread([this] { run(); });
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
    {
        std::lock_guard lock(queue_mu_);
        if (stopping_ && !worker_.joinable()) return;
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
    hub_.close_all();
}

std::future<Json> Service::submit(Command command) {
    Job job{std::move(command), {}};
    auto fut = job.done.get_future();
    {
        std::lock_guard lock(queue_mu_);
        if (stopping_) {
            job.done.set_exception(std::make_exception_ptr(Error(ErrorCode::StorageFailure, "service is shutting down")));
            return fut;
        }
        queue_.push_back(std::move(job));
    }
    queue_cv_.notify_one();
    return fut;
}

Json Service::execute(Command command) { return submit(std::move(command)).get(); }

void Service::run() {
    for (;;) {
        Job job;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return; // stopping and drained
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        try {
            job.done.set_value(process(job.command));
        } catch (...) {
            job.done.set_exception(std::current_exception());
        }
    }
}

Json Service::process(const Command& command) {
    if (failed_) fail(ErrorCode::StorageFailure, "event log failed earlier; restart to recover");

    // Only this thread mutates core_, so deciding needs no lock.
    Decision decision = core_.decide(command);
    if (decision.events.empty()) return std::move(decision.result);

    const auto now = options_.clock();
    for (auto& e : decision.events) e.recorded_at = now;

    const std::uint64_t before = log_->head();
    try {
        log_->append(decision.events);
    } catch (...) {
        failed_ = true;
        throw;
    }
    {
        std::unique_lock lock(state_mu_);
        core_.commit(decision);
    }
    for (const auto& e : decision.events) {
        if (e.kind == event_kind::DeliveryEnqueued) hub_.publish(e.body.at("delivery").get<Delivery>());
    }
    if (options_.snapshot_path && options_.snapshot_every > 0 &&
        before / options_.snapshot_every != log_->head() / options_.snapshot_every) {
        std::shared_lock lock(state_mu_);
        try {
            write_snapshot(*options_.snapshot_path, core_.state());
        } catch (const Error&) {
            // snapshots are advisory
        }
    }
    return std::move(decision.result);
}

std::vector<Delivery> Service::poll(const ParticipantId& mailbox, std::uint64_t after_seq, std::size_t max_batch) const {
    std::shared_lock lock(state_mu_);
    return core_.state().mailboxes.poll(mailbox, after_seq, max_batch);
}

std::shared_ptr<Subscription> Service::subscribe(const ParticipantId& mailbox) {
    {
        std::shared_lock lock(state_mu_);
        if (!core_.state().mailboxes.contains(mailbox)) {
            fail(ErrorCode::UnknownMailbox, "no mailbox for '" + mailbox + "'");
        }
    }
    return hub_.subscribe(mailbox, options_.stream_buffer);
}

std::string Service::canonical_state() const {
    std::shared_lock lock(state_mu_);
    return core_.state().canonical_text();
}

} // namespace cm
