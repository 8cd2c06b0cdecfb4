#include "cm/error.hpp"
#include "cm/event_store.hpp"
#include "cm/service.hpp"

#include <doctest.h>

#include <filesystem>
#include <thread>

using namespace cm;

namespace {

Payload text(std::string t) { return Payload{std::move(t), std::nullopt}; }

struct Cast {
    std::string e1, e2, e3, pat, circle;
};

Cast setup(Service& svc) {
    Cast c;
    c.e1 = svc.execute(RegisterParticipant{Role::Expert, "nutrition", "Ana"})["id"];
    c.e2 = svc.execute(RegisterParticipant{Role::Expert, "coach", "Bo"})["id"];
    c.e3 = svc.execute(RegisterParticipant{Role::Expert, "physician", "Cy"})["id"];
    c.pat = svc.execute(RegisterParticipant{Role::EndUser, std::nullopt, "Pat"})["id"];
    c.circle = svc.execute(CreateCircle{{c.e1, c.e2, c.e3}, {c.pat}})["id"];
    return c;
}

/// Refuses every append after the first `ok` calls.
class FlakyLog : public MemoryEventLog {
public:
    explicit FlakyLog(int ok) : ok_(ok) {}
    std::uint64_t append(std::span<const DomainEvent> events) override {
        if (ok_-- <= 0) throw Error(ErrorCode::StorageFailure, "disk full");
        return MemoryEventLog::append(events);
    }

private:
    int ok_;
};

std::filesystem::path temp_dir(const char* name) {
    auto p = std::filesystem::temp_directory_path() / (std::string("cm-svc-") + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("commands run through the queue and publish after commit") {
    Service svc(std::make_unique<MemoryEventLog>());
    auto c = setup(svc);
    auto sub = svc.subscribe(c.e2);

    auto out = svc.execute(SubmitNotification{c.e1, c.circle, "T1", text("lunch plan")});
    CHECK(out["state"] == "Routed");
    auto d = sub->next(std::chrono::milliseconds(1000));
    REQUIRE(d);
    CHECK(d->seq == 1);
    CHECK(d->notification_id == out["notification_id"]);
    // by the time a subscriber sees it, queries see it too
    CHECK(svc.poll(c.e2, 0).size() == 1);
}

TEST_CASE("a rejected command leaves the log untouched") {
    Service svc(std::make_unique<MemoryEventLog>());
    auto c = setup(svc);
    const auto head = svc.head();
    try {
        svc.execute(SubmitNotification{c.pat, c.circle, "T2", text("x")});
        FAIL("expected RoleMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RoleMismatch);
    }
    CHECK(svc.head() == head);
}

TEST_CASE("concurrent submitters get a total order and replay matches") {
    Service svc(std::make_unique<MemoryEventLog>());
    auto c = setup(svc);
    std::vector<std::thread> threads;
    for (const auto& who : {c.e1, c.e2, c.e3}) {
        threads.emplace_back([&svc, &c, who] {
            for (int i = 0; i < 50; ++i) svc.execute(SubmitNotification{who, c.circle, "T1", text(std::to_string(i))});
        });
    }
    for (auto& t : threads) t.join();
    // each expert receives every T1 the other two sent
    CHECK(svc.poll(c.e1, 0, 1000).size() == 100);
    CHECK(svc.poll(c.e2, 0, 1000).size() == 100);

    auto events = svc.events();
    CHECK(fold(events).canonical_text() == svc.canonical_state());
}

TEST_CASE("append failure stops the service without applying anything") {
    // five setup commands succeed, the sixth append fails
    Service svc(std::make_unique<FlakyLog>(5));
    auto c = setup(svc);
    const auto before = svc.canonical_state();
    CHECK_THROWS_AS(svc.execute(SubmitNotification{c.e1, c.circle, "T1", text("x")}), Error);
    CHECK(svc.failed());
    CHECK(svc.canonical_state() == before);
    try {
        svc.execute(RegisterParticipant{Role::Expert, "coach", "Late"});
        FAIL("expected StorageFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StorageFailure);
    }
}

TEST_CASE("no-op ack returns a result without appending") {
    Service svc(std::make_unique<MemoryEventLog>());
    auto c = setup(svc);
    const auto head = svc.head();
    auto out = svc.execute(AckMailbox{c.e1, 0});
    CHECK(out["last_acked_seq"] == 0);
    CHECK(svc.head() == head);
}

TEST_CASE("shutdown drains queued commands and closes streams") {
    Service svc(std::make_unique<MemoryEventLog>());
    auto c = setup(svc);
    auto sub = svc.subscribe(c.e2);
    std::vector<std::future<Json>> pending;
    for (int i = 0; i < 20; ++i) pending.push_back(svc.submit(SubmitNotification{c.e1, c.circle, "T1", text("x")}));
    svc.shutdown();
    for (auto& f : pending) CHECK_NOTHROW(f.get());
    CHECK(svc.poll(c.e2, 0).size() == 20);
    int seen = 0;
    while (sub->try_next()) ++seen;
    CHECK(seen == 20);
    CHECK(sub->closed());
    CHECK_THROWS_AS(svc.execute(RegisterParticipant{Role::Expert, "coach", "x"}), Error);
}

TEST_CASE("file-backed service survives a restart and writes snapshots") {
    auto dir = temp_dir("restart");
    const auto log_path = dir / "events.log";
    std::string state;
    {
        ServiceOptions opts;
        opts.snapshot_path = dir / "events.snap";
        opts.snapshot_every = 10;
        Service svc(FileEventLog::open(log_path, {false}), opts);
        auto c = setup(svc);
        for (int i = 0; i < 10; ++i) svc.execute(SubmitNotification{c.e1, c.circle, "T1", text("x")});
        state = svc.canonical_state();
        svc.shutdown();
        REQUIRE(std::filesystem::exists(dir / "events.snap"));
        // written after the command that crossed the last multiple of 10
        auto snap = read_snapshot(dir / "events.snap");
        CHECK(snap.head >= 10);
        CHECK(snap.head <= svc.head());
        auto events = svc.events();
        events.resize(snap.head);
        CHECK(fold(events).canonical_text() == snap.canonical_text());
    }
    Service again(FileEventLog::open(log_path, {false}));
    CHECK(again.canonical_state() == state);
    std::filesystem::remove_all(dir);
}

TEST_CASE("subscribe to an unknown mailbox fails") {
    Service svc(std::make_unique<MemoryEventLog>());
    try {
        svc.subscribe("p99");
        FAIL("expected UnknownMailbox");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownMailbox);
    }
}
