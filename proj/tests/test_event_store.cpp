#include <doctest.h>

#include "cm/error.hpp"
#include "cm/event_store.hpp"
#include "fixtures.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace cm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int n = 0;
        path = fs::temp_directory_path() / ("cm-test-" + std::to_string(::getpid()) + "-" + std::to_string(++n));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DomainEvent ev(std::uint64_t seq, std::string kind = "ParticipantRegistered") {
    return DomainEvent{seq, std::move(kind), Json{{"n", seq}}, 1700000000000};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("append assigns gapless seqs") {
    MemoryEventLog log;
    std::vector<DomainEvent> batch{ev(1), ev(2), ev(3)};
    CHECK(log.append(batch) == 3);
    auto all = log.read_from(1);
    REQUIRE(all.size() == 3);
    CHECK(all[2].seq == 3);
    std::vector<DomainEvent> gap{ev(5)};
    CHECK_THROWS_AS(log.append(gap), Error);
    CHECK(log.head() == 3);
}

TEST_CASE("read_from") {
    MemoryEventLog log;
    CHECK(log.read_from(1).empty());
    std::vector<DomainEvent> batch;
    for (std::uint64_t i = 1; i <= 10; ++i) batch.push_back(ev(i));
    log.append(batch);
    CHECK(log.read_from(10).size() == 1);
    CHECK(log.read_from(11).empty());
    for (std::uint64_t k = 1; k <= 10; ++k) {
        auto tail = log.read_from(k);
        auto all = log.read_from(1);
        std::vector<DomainEvent> head(all.begin(), all.begin() + static_cast<long>(k - 1));
        head.insert(head.end(), tail.begin(), tail.end());
        CHECK(head == all);
    }
}

TEST_CASE("record framing round-trips and detects damage") {
    const auto e = ev(1);
    const auto line = encode_record(e);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(decode_record(line, 1) == e);
    CHECK(line.substr(0, line.find('\t')) ==
          R"({"body":{"n":1},"kind":"ParticipantRegistered","recorded_at":1700000000000,"seq":1})");

    auto flipped = line;
    flipped[10] = flipped[10] == 'x' ? 'y' : 'x';
    CHECK_THROWS_AS(decode_record(flipped, 1), Error);
    CHECK_THROWS_AS(decode_record(line, 2), Error);
    CHECK_THROWS_AS(decode_record(line.substr(0, line.size() - 3), 1), Error);
}

TEST_CASE("file log: header, reopen, 10k appends") {
    TempDir dir;
    const auto path = dir.path / "events.log";
    {
        auto log = FileEventLog::open(path, {.fsync = false});
        for (std::uint64_t i = 1; i <= 10000; ++i) {
            std::vector<DomainEvent> one{ev(i)};
            log->append(one);
        }
    }
    CHECK(slurp(path).rfind("cm-log v1\n", 0) == 0);
    auto log = FileEventLog::open(path, {.fsync = false});
    auto all = log->read_from(1);
    REQUIRE(all.size() == 10000);
    for (std::uint64_t i = 0; i < all.size(); ++i) CHECK(all[i].seq == i + 1);
    CHECK(read_log_file(path) == all);
}

TEST_CASE("crash after a partial write leaves a clean prefix") {
    TempDir dir;
    const auto path = dir.path / "events.log";
    std::vector<DomainEvent> events;
    for (std::uint64_t i = 1; i <= 5; ++i) events.push_back(ev(i));
    {
        auto log = FileEventLog::open(path, {.fsync = false});
        log->append(events);
    }
    const auto full = slurp(path);
    // Record boundaries as byte offsets just past each newline.
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (full[i] == '\n') ends.push_back(i + 1);
    }
    REQUIRE(ends.size() == 6);

    std::mt19937 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t cut = rng() % (full.size() + 1);
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out.write(full.data(), static_cast<std::streamsize>(cut));
        }
        auto log = FileEventLog::open(path, {.fsync = false});
        // complete records = newline-terminated ones after the header
        std::size_t complete = 0;
        for (std::size_t k = 1; k < ends.size(); ++k) complete += ends[k] <= cut;
        CAPTURE(cut);
        CHECK(log->head() == complete);
        CHECK(log->read_from(1) == std::vector<DomainEvent>(events.begin(), events.begin() + static_cast<long>(complete)));
        // appending after recovery continues the prefix
        std::vector<DomainEvent> next{ev(complete + 1)};
        log->append(next);
        CHECK(read_log_file(path).size() == complete + 1);
    }
}

TEST_CASE("a damaged record in the middle is corruption, not truncation") {
    TempDir dir;
    const auto path = dir.path / "events.log";
    {
        auto log = FileEventLog::open(path, {.fsync = false});
        std::vector<DomainEvent> events{ev(1), ev(2), ev(3)};
        log->append(events);
    }
    auto text = slurp(path);
    const auto second = text.find("\"n\":2");
    text[second + 4] = '9';
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
    }
    try {
        FileEventLog::open(path);
        FAIL("expected CorruptRecord");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CorruptRecord);
        CHECK(std::string(e.what()).find("record 2") != std::string::npos);
    }
}

TEST_CASE("replay equals live state and is deterministic") {
    test::CareTeam team;
    auto n = team.core.submit_notification(team.e1.id, team.circle.id, "T2", test::text("plan")).notification_id;
    team.core.respond_approval(team.e2.id, n, Verdict::OK);
    team.core.respond_approval(team.e3.id, n, Verdict::OK);
    auto task = team.core.create_task(team.e1.id, team.circle.id, team.patient.id, {"a"}, {Goal{"g", "", false}});
    team.core.apply_task_change(team.e2.id, task.id, TaskDiff{}, false);
    team.core.report_progress(team.patient.id, task.id, {Metric{"km", 3.5}, Metric{"mood", std::string("good")}});
    team.core.record_goal_reached(team.patient.id, task.id, "g");
    team.core.ack(team.patient.id, 1);

    MemoryEventLog log;
    log.append(team.core.journal());
    const State once = replay(log);
    const State twice = replay(log);
    CHECK(once.canonical_text() == team.core.state().canonical_text());
    CHECK(once.canonical_text() == twice.canonical_text());
    CHECK(once == team.core.state());

    // every prefix replays cleanly
    const auto& journal = team.core.journal();
    for (std::size_t k = 0; k <= journal.size(); ++k) {
        CHECK_NOTHROW(fold(std::span(journal).first(k)));
    }

    CHECK(replay(MemoryEventLog{}).canonical_text() == State{}.canonical_text());
}

TEST_CASE("snapshot round-trips the state") {
    TempDir dir;
    test::CareTeam team;
    team.core.submit_notification(team.e1.id, team.circle.id, "T1", test::text("x"));
    write_snapshot(dir.path / "snap", team.core.state());
    CHECK(read_snapshot(dir.path / "snap").canonical_text() == team.core.state().canonical_text());
}

TEST_CASE("replay rejects events that do not fit") {
    std::vector<DomainEvent> bad{DomainEvent{1, "NoSuchKind", Json::object(), 0}};
    CHECK_THROWS_AS(fold(bad), Error);
    std::vector<DomainEvent> dangling{
        DomainEvent{1, "ApprovalRecorded", Json{{"notification_id", "n1"}, {"expert", "p1"}, {"verdict", "OK"}}, 0}};
    CHECK_THROWS_AS(fold(dangling), Error);
}
