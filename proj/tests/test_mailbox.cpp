#include <doctest.h>

#include "cm/error.hpp"
#include "cm/mailbox.hpp"
#include "cm/stream.hpp"

#include <map>
#include <random>

using namespace cm;
using namespace std::chrono_literals;

namespace {

Delivery make(const std::string& mailbox, const std::string& notification, DeliveryKind kind = DeliveryKind::Direct) {
    static int counter = 0;
    return Delivery{"d" + std::to_string(++counter), mailbox, 0, notification, kind, Json{{"text", notification}}, false};
}

/// Mailbox store plus hub, wired the way the service wires them.
struct LiveBoxes : MailboxSource {
    MailboxStore store;
    StreamHub hub;

    std::uint64_t enqueue(Delivery d) {
        const auto seq = store.enqueue(d);
        d.seq = seq;
        hub.publish(d);
        return seq;
    }
    std::vector<Delivery> poll(const ParticipantId& m, std::uint64_t after, std::size_t max) const override {
        return store.poll(m, after, max);
    }
    std::shared_ptr<Subscription> subscribe(const ParticipantId& m) override {
        if (!store.contains(m)) fail(ErrorCode::UnknownMailbox, m);
        return hub.subscribe(m);
    }
};

} // namespace

TEST_CASE("enqueue assigns per-mailbox seqs from 1") {
    MailboxStore s;
    s.create("a");
    CHECK(s.enqueue(make("a", "n1")) == 1);
    CHECK(s.enqueue(make("a", "n2")) == 2);
    auto got = s.poll("a", 0);
    REQUIRE(got.size() == 2);
    CHECK(got[0].notification_id == "n1");
    CHECK(got[1].notification_id == "n2");
    CHECK_THROWS_AS(s.enqueue(make("zz", "n1")), Error);
}

TEST_CASE("1000 enqueues across 10 mailboxes keep per-mailbox order") {
    MailboxStore s;
    for (int m = 0; m < 10; ++m) s.create("m" + std::to_string(m));
    std::mt19937 rng(11);
    std::map<std::string, std::vector<std::string>> script;
    // 100 per mailbox, interleaved randomly
    std::vector<int> slots;
    for (int m = 0; m < 10; ++m) slots.insert(slots.end(), 100, m);
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto box = "m" + std::to_string(slots[i]);
        const auto n = "n" + std::to_string(i);
        s.enqueue(make(box, n));
        script[box].push_back(n);
    }
    for (const auto& [box, want] : script) {
        const auto got = s.poll(box, 0, 1000);
        REQUIRE(got.size() == 100);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].seq == i + 1);
            CHECK(got[i].notification_id == want[i]);
        }
    }
}

TEST_CASE("poll") {
    MailboxStore s;
    s.create("a");
    for (int i = 1; i <= 3; ++i) s.enqueue(make("a", "n" + std::to_string(i)));
    CHECK(s.poll("a", 0).size() == 3);
    CHECK(s.poll("a", 3).empty());
    CHECK(s.poll("a", 99).empty());
    CHECK(s.poll("a", 1, 1).front().seq == 2);
    CHECK(s.poll("a", 0) == s.poll("a", 0));
    CHECK_THROWS_AS(s.poll("b", 0), Error);
}

TEST_CASE("ack moves a monotone cursor") {
    MailboxStore s;
    s.create("a");
    for (int i = 1; i <= 6; ++i) s.enqueue(make("a", "n" + std::to_string(i)));
    CHECK(s.ack("a", 5).cursor.last_acked_seq == 5);
    CHECK(s.ack("a", 3).cursor.last_acked_seq == 5);
    const auto snapshot = s;
    CHECK(s.ack("a", 5).newly_acked.empty());
    CHECK(s == snapshot);
    CHECK(s.poll("a", 0)[4].acked);
    CHECK_FALSE(s.poll("a", 0)[5].acked);
    try {
        s.ack("a", 7);
        FAIL("expected SeqBeyondHead");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SeqBeyondHead);
    }
}

TEST_CASE("redelivery of the same (notification, kind) reuses the slot") {
    MailboxStore s;
    s.create("a");
    auto d = make("a", "n1");
    CHECK(s.enqueue(d) == 1);
    CHECK(s.enqueue(d) == 1);
    CHECK(s.enqueue(make("a", "n1", DeliveryKind::ApprovalRequest)) == 2);
    CHECK(s.head("a") == 2);
}

TEST_CASE("enqueue/poll/ack fuzz against a reference queue") {
    std::mt19937 rng(3);
    for (int round = 0; round < 200; ++round) {
        MailboxStore s;
        s.create("a");
        std::vector<std::string> model; // seq-1 -> notification
        std::uint64_t model_cursor = 0;
        std::uint64_t client_after = 0;
        std::set<std::uint64_t> seen;
        for (int step = 0; step < 60; ++step) {
            switch (rng() % 3) {
            case 0: {
                const auto n = "n" + std::to_string(model.size());
                s.enqueue(make("a", n));
                model.push_back(n);
                break;
            }
            case 1: {
                auto batch = s.poll("a", client_after, 1 + rng() % 5);
                std::uint64_t expect = client_after + 1;
                for (const auto& d : batch) {
                    CHECK(d.seq == expect);
                    CHECK(d.notification_id == model[d.seq - 1]);
                    CHECK(d.acked == (d.seq <= model_cursor));
                    seen.insert(d.seq);
                    ++expect;
                }
                break;
            }
            default: {
                if (model.empty()) break;
                const std::uint64_t up = rng() % (model.size() + 1);
                // a consumer only acks what it has seen
                if (up > 0 && !seen.contains(up)) break;
                s.ack("a", up);
                model_cursor = std::max(model_cursor, up);
                client_after = std::max(client_after, up);
                break;
            }
            }
            CHECK(s.cursor("a").last_acked_seq == model_cursor);
        }
        // everything unacked is still returned
        auto rest = s.poll("a", model_cursor, 1000);
        CHECK(rest.size() == model.size() - model_cursor);
    }
}

TEST_CASE("subscription receives deliveries after it exists") {
    LiveBoxes boxes;
    boxes.store.create("a");
    boxes.enqueue(make("a", "before"));
    auto sub = boxes.subscribe("a");
    boxes.enqueue(make("a", "after"));
    auto d = sub->next(100ms);
    REQUIRE(d);
    CHECK(d->notification_id == "after");
    CHECK(d->seq == 2);
    CHECK_FALSE(sub->try_next());
    CHECK(boxes.poll("a", 0, 10).size() == 2);
    CHECK_THROWS_AS(boxes.subscribe("nobody"), Error);
}

TEST_CASE("every subscriber of a mailbox gets every delivery") {
    LiveBoxes boxes;
    boxes.store.create("a");
    auto phone = boxes.subscribe("a");
    auto laptop = boxes.subscribe("a");
    boxes.enqueue(make("a", "n1"));
    CHECK(phone->next(50ms)->notification_id == "n1");
    CHECK(laptop->next(50ms)->notification_id == "n1");
    CHECK(boxes.hub.subscriber_count("a") == 2);
}

TEST_CASE("overflow closes the stream instead of blocking the producer") {
    StreamHub hub;
    auto sub = hub.subscribe("a", 2);
    for (int i = 1; i <= 3; ++i) hub.publish(Delivery{"d", "a", std::uint64_t(i), "n", DeliveryKind::Direct, {}, false});
    CHECK(sub->closed());
    CHECK(sub->overflowed());
    CHECK(sub->next(10ms)->seq == 1);
    CHECK(sub->next(10ms)->seq == 2);
    CHECK_FALSE(sub->next(10ms));
}

TEST_CASE("dropping a stream and resuming by poll leaves no gaps") {
    std::mt19937 rng(5);
    for (int round = 0; round < 100; ++round) {
        LiveBoxes boxes;
        boxes.store.create("a");
        std::vector<Delivery> received;
        std::uint64_t resume_from = 0;
        auto stream = std::make_unique<ResumableStream>(boxes, "a", 0);
        int produced = 0;
        for (int step = 0; step < 40; ++step) {
            const auto r = rng() % 4;
            if (r < 2) {
                boxes.enqueue(make("a", "n" + std::to_string(produced++)));
            } else if (r == 2 && stream) {
                if (auto d = stream->next(0ms)) {
                    received.push_back(*d);
                    resume_from = d->seq;
                }
            } else if (stream) {
                stream.reset(); // connection lost
            } else {
                stream = std::make_unique<ResumableStream>(boxes, "a", resume_from);
            }
        }
        if (!stream) stream = std::make_unique<ResumableStream>(boxes, "a", resume_from);
        while (auto d = stream->next(0ms)) received.push_back(*d);

        std::map<std::string, std::uint64_t> unique;
        for (const auto& d : received) unique.emplace(d.delivery_id, d.seq);
        CHECK(unique.size() == static_cast<std::size_t>(produced));
        std::uint64_t expect = 1;
        for (const auto& d : received) CHECK(d.seq <= expect++);
    }
}
