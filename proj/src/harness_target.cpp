#include "cm/api.hpp"
#include "cm/api_client.hpp"
#include "cm/error.hpp"
#include "cm/harness.hpp"
#include "cm/json_fields.hpp"
#include "cm/stream.hpp"

namespace cm::harness {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const std::string kAdmin(api::kAdminPrincipal);

class LocalReader : public StreamReader {
public:
    LocalReader(Service& svc, const ParticipantId& owner, std::uint64_t after) : stream_(svc, owner, after) {}
    std::optional<Delivery> next(std::chrono::milliseconds timeout) override { return stream_.next(timeout); }
    bool ended() const override { return stream_.ended(); }

private:
    ResumableStream stream_;
};

class RemoteReader : public StreamReader {
public:
    RemoteReader(const std::string& url, const std::string& token, std::uint64_t after) : stream_(url, token, after) {}
    std::optional<Delivery> next(std::chrono::milliseconds timeout) override { return stream_.next(timeout); }
    bool ended() const override { return stream_.ended(); }

private:
    api::EventStreamClient stream_;
};

} // namespace

WireRequest to_wire(const Command& command) {
    using api::encode_segment;
    return std::visit(
        overloaded{
            [](const RegisterParticipant& c) {
                Json b{{"role", c.role}, {"display_name", c.display_name}};
                put_optional(b, "domain", c.domain);
                return WireRequest{kAdmin, "POST", "/participants", b};
            },
            [](const CreateCircle& c) {
                return WireRequest{kAdmin, "POST", "/circles", Json{{"experts", c.experts}, {"patients", c.patients}}};
            },
            [](const AddCircleMember& c) {
                return WireRequest{kAdmin, "POST", "/circles/" + encode_segment(c.circle) + "/members",
                                   Json{{"participant", c.participant}}};
            },
            [](const SubmitNotification& c) {
                return WireRequest{c.sender, "POST", "/notifications",
                                   Json{{"circle", c.circle}, {"type", c.type_code}, {"payload", c.payload}}};
            },
            [](const RespondApproval& c) {
                return WireRequest{c.expert, "POST", "/notifications/" + encode_segment(c.notification_id) + "/approvals",
                                   Json{{"verdict", c.verdict}}};
            },
            [](const CreateTask& c) {
                Json b{{"circle", c.circle}, {"patient", c.patient}, {"instructions", c.instructions}, {"goals", c.goals}};
                put_optional(b, "schedule", c.schedule);
                return WireRequest{c.creator, "POST", "/tasks", b};
            },
            [](const ApplyTaskChange& c) {
                return WireRequest{c.editor, "PATCH", "/tasks/" + encode_segment(c.task_id),
                                   Json{{"diff", c.diff}, {"notify_patient", c.notify_patient}}};
            },
            [](const ReportProgress& c) {
                return WireRequest{c.patient, "POST", "/tasks/" + encode_segment(c.task_id) + "/reports",
                                   Json{{"metrics", c.metrics}}};
            },
            [](const RecordGoalReached& c) {
                return WireRequest{c.patient, "POST",
                                   "/tasks/" + encode_segment(c.task_id) + "/goals/" + encode_segment(c.goal_label) +
                                       "/reached",
                                   nullptr};
            },
            [](const RegisterNotificationType& c) { return WireRequest{kAdmin, "POST", "/types", Json(c.spec)}; },
            [](const AckMailbox& c) {
                return WireRequest{c.mailbox, "POST", "/mailbox/ack", Json{{"up_to_seq", c.up_to_seq}}};
            },
        },
        command);
}

std::string token_for(const std::string& principal) { return "tok-" + principal; }

Json token_table(std::size_t participants) {
    Json t{{token_for(kAdmin), kAdmin}};
    for (std::size_t i = 1; i <= participants; ++i) {
        const auto id = "p" + std::to_string(i);
        t[token_for(id)] = id;
    }
    return t;
}

InProcessTarget::InProcessTarget(std::size_t stream_buffer) {
    ServiceOptions opts;
    opts.stream_buffer = stream_buffer;
    opts.clock = [this] { return static_cast<std::int64_t>(tick_.load()); };
    service_ = std::make_unique<Service>(std::make_unique<MemoryEventLog>(), std::move(opts));
}

Json InProcessTarget::execute(const Command& command) { return service_->execute(command); }

std::vector<Delivery> InProcessTarget::mailbox(const ParticipantId& owner) {
    return service_->read([&](const State& st) { return st.mailboxes.deliveries(owner); });
}

std::vector<DomainEvent> InProcessTarget::events() { return service_->events(); }

Json InProcessTarget::notification(const NotificationId& id) {
    return service_->read([&](const State& st) {
        auto it = st.notifications.find(id);
        if (it == st.notifications.end()) fail(ErrorCode::UnknownNotification, "unknown notification " + id);
        Json out{{"notification", it->second}};
        if (auto s = st.sessions.find(id); s != st.sessions.end()) out["session"] = s->second;
        return out;
    });
}

std::unique_ptr<StreamReader> InProcessTarget::open_stream(const ParticipantId& owner, std::uint64_t after_seq) {
    return std::make_unique<LocalReader>(*service_, owner, after_seq);
}

HttpTarget::HttpTarget(std::string base_url) : base_url_(std::move(base_url)) {
    auto ready = client(kAdmin).request("GET", "/readyz");
    if (ready.status != 200) fail(ErrorCode::TargetUnreachable, base_url_ + " is not ready");
}

HttpTarget::~HttpTarget() = default;

api::ApiClient& HttpTarget::client(const std::string& principal) {
    std::lock_guard lock(mu_);
    auto& c = clients_[principal];
    if (!c) c = std::make_unique<api::ApiClient>(base_url_, token_for(principal));
    return *c;
}

Json HttpTarget::execute(const Command& command) {
    auto w = to_wire(command);
    return client(w.principal).call(w.method, w.path, w.body);
}

std::vector<Delivery> HttpTarget::mailbox(const ParticipantId& owner) {
    std::vector<Delivery> out;
    for (;;) {
        const auto after = out.empty() ? 0 : out.back().seq;
        auto page = client(owner).call("GET", "/mailbox?max_batch=1000&after_seq=" + std::to_string(after));
        const auto& list = page.at("deliveries");
        if (list.empty()) return out;
        for (const auto& d : list) out.push_back(d.get<Delivery>());
    }
}

std::vector<DomainEvent> HttpTarget::events() {
    std::vector<DomainEvent> out;
    const Json page = client(kAdmin).call("GET", "/events");
    for (const auto& e : page.at("events")) {
        out.push_back(DomainEvent{e.at("seq").get<std::uint64_t>(), e.at("kind").get<std::string>(), e.at("body"),
                                  e.at("recorded_at").get<std::int64_t>()});
    }
    return out;
}

Json HttpTarget::notification(const NotificationId& id) {
    return client(kAdmin).call("GET", "/notifications/" + api::encode_segment(id));
}

std::unique_ptr<StreamReader> HttpTarget::open_stream(const ParticipantId& owner, std::uint64_t after_seq) {
    return std::make_unique<RemoteReader>(base_url_, token_for(owner), after_seq);
}

} // namespace cm::harness
