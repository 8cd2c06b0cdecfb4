#include "cm/error.hpp"
#include "cm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace cm::harness {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

struct Op {
    std::string type;
    Command command;
};

struct Receipt {
    NotificationId notification;
    DeliveryKind kind;
    Clock::time_point at;
};

/// One participant's live reader. Experts approve every request they see.
class Consumer {
public:
    Consumer(Target& t, ParticipantId id, bool approves, std::atomic<std::size_t>& in_flight)
        : t_(t), id_(std::move(id)), approves_(approves), in_flight_(in_flight) {
        reader_ = t_.open_stream(id_, 0);
        thread_ = std::thread([this] { loop(); });
    }
    ~Consumer() { stop(); }

    void stop() {
        stop_ = true;
        if (thread_.joinable()) thread_.join();
    }

    const ParticipantId& id() const { return id_; }
    std::uint64_t last() const { return last_.load(); }

    // valid after stop()
    std::vector<std::uint64_t> seqs;
    std::vector<Receipt> receipts;
    std::map<NotificationId, Clock::time_point> approvals; // start of our OK
    std::size_t reconnects = 0;
    std::size_t approval_errors = 0;

private:
    void loop() {
        while (!stop_) {
            auto d = reader_->next(std::chrono::milliseconds(50));
            if (!d) {
                if (reader_->ended() && !stop_) {
                    reader_ = t_.open_stream(id_, last_);
                    ++reconnects;
                }
                continue;
            }
            if (d->seq <= last_) continue;
            const auto now = Clock::now();
            seqs.push_back(d->seq);
            receipts.push_back({d->notification_id, d->kind, now});
            if (approves_ && d->kind == DeliveryKind::ApprovalRequest) {
                ++in_flight_;
                approvals[d->notification_id] = Clock::now();
                try {
                    t_.execute(RespondApproval{id_, d->notification_id, Verdict::OK});
                } catch (const Error&) {
                    ++approval_errors;
                }
                --in_flight_;
            }
            last_ = d->seq;
        }
    }

    Target& t_;
    ParticipantId id_;
    bool approves_;
    std::atomic<std::size_t>& in_flight_;
    std::unique_ptr<StreamReader> reader_;
    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> last_{0};
    std::thread thread_;
};

NotificationId notification_of(const Json& result) {
    if (result.contains("notification_id") && result["notification_id"].is_string()) return result["notification_id"];
    if (result.contains("id") && result["id"].is_string()) return result["id"];
    return {};
}

} // namespace

std::map<std::string, double> parse_mix(std::string_view text) {
    std::map<std::string, double> mix;
    double sum = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string_view::npos) comma = text.size();
        const auto item = text.substr(pos, comma - pos);
        pos = comma + 1;
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) fail(ErrorCode::InvalidRequest, "mix entry needs type=weight");
        std::string type(item.substr(0, eq));
        std::transform(type.begin(), type.end(), type.begin(), [](unsigned char c) { return std::toupper(c); });
        if (type.size() != 2 || type[0] != 'T' || type[1] < '1' || type[1] > '6') {
            fail(ErrorCode::InvalidRequest, "mix type must be t1..t6, got '" + type + "'");
        }
        double w = 0;
        try {
            w = std::stod(std::string(item.substr(eq + 1)));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidRequest, "bad weight for " + type);
        }
        if (w < 0) fail(ErrorCode::InvalidRequest, "negative weight for " + type);
        mix[type] += w;
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(ErrorCode::InvalidRequest, "mix weights must sum to 1");
    return mix;
}

LatencySummary summarize(std::vector<double> millis) {
    LatencySummary s;
    s.samples = millis.size();
    if (millis.empty()) return s;
    std::sort(millis.begin(), millis.end());
    auto rank = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(millis.size())));
        return millis[std::clamp<std::size_t>(idx, 1, millis.size()) - 1];
    };
    s.p50 = rank(0.50);
    s.p95 = rank(0.95);
    s.p99 = rank(0.99);
    s.max = millis.back();
    return s;
}

LoadReport load_test(Target& t, const LoadOptions& o) {
    if (o.experts == 0 || o.patients == 0 || o.count == 0 || o.senders == 0) {
        fail(ErrorCode::InvalidRequest, "experts, patients, count and senders must be positive");
    }
    double sum = 0;
    for (const auto& [type, w] : o.mix) sum += w;
    if (std::abs(sum - 1.0) > 1e-6) fail(ErrorCode::InvalidRequest, "mix weights must sum to 1");
    const std::size_t per_circle = std::min(o.experts, std::max<std::size_t>(1, o.experts_per_circle));
    if (o.mix.count("T2") && o.mix.at("T2") > 0 && per_circle < 2) {
        fail(ErrorCode::InvalidRequest, "T2 needs at least two experts per circle");
    }

    // population
    std::vector<ParticipantId> experts, patients;
    for (std::size_t i = 0; i < o.experts; ++i) {
        experts.push_back(t.execute(RegisterParticipant{Role::Expert, "coach", "load-e" + std::to_string(i)})["id"]);
    }
    for (std::size_t i = 0; i < o.patients; ++i) {
        patients.push_back(t.execute(RegisterParticipant{Role::EndUser, std::nullopt, "load-p" + std::to_string(i)})["id"]);
    }
    struct Circle {
        CircleId id;
        std::vector<ParticipantId> experts;
        ParticipantId patient;
        TaskId task;
        std::size_t goals = 0;
    };
    std::vector<Circle> circles;
    for (std::size_t i = 0; i < o.patients; ++i) {
        Circle c;
        for (std::size_t j = 0; j < per_circle; ++j) c.experts.push_back(experts[(i * per_circle + j) % o.experts]);
        c.patient = patients[i];
        c.id = t.execute(CreateCircle{{c.experts.begin(), c.experts.end()}, {c.patient}})["id"];
        circles.push_back(std::move(c));
    }

    // plan
    std::mt19937_64 rng(o.seed);
    std::vector<std::string> types;
    std::vector<double> weights;
    for (const auto& [type, w] : o.mix) {
        types.push_back(type);
        weights.push_back(w);
    }
    std::discrete_distribution<std::size_t> pick_type(weights.begin(), weights.end());
    std::uniform_int_distribution<std::size_t> pick_circle(0, circles.size() - 1);
    struct Planned {
        std::string type;
        std::size_t circle;
        std::size_t expert;
        std::size_t goal;
    };
    std::vector<Planned> plan;
    for (std::size_t i = 0; i < o.count; ++i) {
        const auto type = types[pick_type(rng)];
        const auto ci = pick_circle(rng);
        const auto ei = std::uniform_int_distribution<std::size_t>(0, circles[ci].experts.size() - 1)(rng);
        plan.push_back({type, ci, ei, type == "T6" ? ++circles[ci].goals : 0});
    }
    for (auto& c : circles) {
        std::vector<Goal> goals;
        for (std::size_t g = 1; g <= c.goals; ++g) goals.push_back(Goal{"goal " + std::to_string(g), "done", false});
        c.task = t.execute(CreateTask{c.experts.front(), c.id, c.patient, {"walk daily"}, std::nullopt, goals})["id"];
    }
    std::vector<Op> ops;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& p = plan[i];
        const auto& c = circles[p.circle];
        const auto& expert = c.experts[p.expert];
        const std::string text = "load#" + std::to_string(i);
        if (p.type == "T1" || p.type == "T2") {
            ops.push_back({p.type, SubmitNotification{expert, c.id, p.type, Payload{text, std::nullopt}}});
        } else if (p.type == "T3" || p.type == "T4") {
            TaskDiff diff;
            diff.instructions = std::vector<std::string>{text};
            ops.push_back({p.type, ApplyTaskChange{expert, c.task, diff, p.type == "T3"}});
        } else if (p.type == "T5") {
            ops.push_back({p.type, ReportProgress{c.patient, c.task, {Metric{"steps", static_cast<double>(i)}}}});
        } else {
            ops.push_back({p.type, RecordGoalReached{c.patient, c.task, "goal " + std::to_string(p.goal)}});
        }
    }

    // consumers
    std::atomic<std::size_t> in_flight{0};
    std::vector<std::unique_ptr<Consumer>> consumers;
    for (const auto& e : experts) consumers.push_back(std::make_unique<Consumer>(t, e, true, in_flight));
    for (const auto& p : patients) consumers.push_back(std::make_unique<Consumer>(t, p, false, in_flight));

    // drive
    std::vector<Clock::time_point> started(ops.size());
    std::vector<NotificationId> produced(ops.size());
    std::atomic<std::size_t> next{0}, errors{0};
    const auto t_begin = Clock::now();
    std::vector<std::thread> senders;
    for (std::size_t s = 0; s < o.senders; ++s) {
        senders.emplace_back([&] {
            for (std::size_t i = next++; i < ops.size(); i = next++) {
                started[i] = Clock::now();
                try {
                    produced[i] = notification_of(t.execute(ops[i].command));
                } catch (const Error&) {
                    ++errors;
                }
            }
        });
    }
    for (auto& s : senders) s.join();

    // settle: every consumer caught up with its mailbox and no approvals pending
    std::map<ParticipantId, std::uint64_t> heads;
    std::size_t enqueued = 0;
    const auto deadline = Clock::now() + o.settle_timeout;
    for (;;) {
        heads.clear();
        enqueued = 0;
        for (const auto& e : t.events()) {
            if (e.kind != event_kind::DeliveryEnqueued) continue;
            const auto& d = e.body.at("delivery");
            auto& h = heads[d.at("mailbox").get<std::string>()];
            h = std::max(h, d.at("seq").get<std::uint64_t>());
        }
        bool caught_up = in_flight == 0;
        for (const auto& c : consumers) {
            const auto h = heads.count(c->id()) ? heads[c->id()] : 0;
            enqueued += h;
            caught_up = caught_up && c->last() >= h;
        }
        if (caught_up || Clock::now() > deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    const auto t_end = Clock::now();
    for (auto& c : consumers) c->stop();

    // audit and latency
    LoadReport r;
    r.experts = o.experts;
    r.patients = o.patients;
    r.participants = o.experts + o.patients;
    r.notifications = ops.size();
    r.command_errors = errors;
    r.deliveries_enqueued = enqueued;

    std::map<NotificationId, std::size_t> op_of;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (!produced[i].empty()) op_of[produced[i]] = i;
    }
    std::map<NotificationId, Clock::time_point> last_approval;
    std::size_t approvals = 0;
    for (const auto& c : consumers) {
        approvals += c->approvals.size();
        r.command_errors += c->approval_errors;
        r.reconnects += c->reconnects;
        for (const auto& [n, at] : c->approvals) {
            auto& slot = last_approval[n];
            slot = std::max(slot, at);
        }
    }
    std::vector<double> latencies;
    for (const auto& c : consumers) {
        const auto h = heads.count(c->id()) ? heads[c->id()] : 0;
        r.deliveries_received += c->seqs.size();
        // seqs are strictly increasing and start at 1, so the count tells the loss
        r.lost += h - std::min<std::uint64_t>(h, c->seqs.size());
        for (const auto& rc : c->receipts) {
            auto it = op_of.find(rc.notification);
            if (it == op_of.end()) continue;
            auto t0 = started[it->second];
            const bool after_approval = ops[it->second].type == "T2" && rc.kind != DeliveryKind::ApprovalRequest;
            if (after_approval) {
                auto a = last_approval.find(rc.notification);
                if (a == last_approval.end()) continue;
                t0 = a->second;
            }
            latencies.push_back(ms_between(t0, rc.at));
        }
    }
    r.commands = ops.size() + approvals;
    r.seconds = std::chrono::duration<double>(t_end - t_begin).count();
    r.throughput = r.seconds > 0 ? static_cast<double>(r.commands) / r.seconds : 0;
    r.latency = summarize(std::move(latencies));
    return r;
}

Json LoadReport::to_json() const {
    return Json{{"participants", participants},
                {"experts", experts},
                {"patients", patients},
                {"notifications", notifications},
                {"commands", commands},
                {"command_errors", command_errors},
                {"deliveries_enqueued", deliveries_enqueued},
                {"deliveries_received", deliveries_received},
                {"lost", lost},
                {"reconnects", reconnects},
                {"seconds", seconds},
                {"throughput_cmds_per_s", throughput},
                {"latency_ms",
                 {{"samples", latency.samples},
                  {"p50", latency.p50},
                  {"p95", latency.p95},
                  {"p99", latency.p99},
                  {"max", latency.max}}}};
}

} // namespace cm::harness
