#include "cm/api.hpp"

#include "cm/error.hpp"
#include "cm/json_fields.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <iostream>
#include <sstream>

extern char** environ;

namespace cm::api {

namespace {

constexpr const char* kJson = "application/json";

std::uint64_t parse_u64(const std::string& text, const char* name) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        fail(ErrorCode::InvalidRequest, std::string("bad ") + name + " '" + text + "'");
    }
    return v;
}

std::uint64_t query_u64(const httplib::Request& req, const char* name, std::uint64_t fallback) {
    if (!req.has_param(name)) return fallback;
    return parse_u64(req.get_param_value(name), name);
}

Json body_of(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    Json j = parse_json(req.body);
    if (!j.is_object()) fail(ErrorCode::InvalidRequest, "request body must be an object");
    return j;
}

void reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, kJson);
}

std::string error_body(const Error& e) {
    return canonical(Json{{"code", to_string(e.code())}, {"message", e.what()}});
}

bool is_participant(const std::string& principal) { return principal != kAdminPrincipal; }

} // namespace

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::Unauthorized:
        return 401;
    case ErrorCode::Forbidden:
        return 403;
    case ErrorCode::UnknownParticipant:
    case ErrorCode::UnknownCircle:
    case ErrorCode::UnknownNotification:
    case ErrorCode::UnknownTask:
    case ErrorCode::UnknownGoal:
    case ErrorCode::UnknownMailbox:
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::DuplicateResponse:
    case ErrorCode::SessionClosed:
    case ErrorCode::GoalAlreadyReached:
    case ErrorCode::CodeCollision:
    case ErrorCode::AlreadyMember:
    case ErrorCode::TaskNotActive:
        return 409;
    case ErrorCode::StorageFailure:
    case ErrorCode::CorruptRecord:
    case ErrorCode::LogCorrupt:
    case ErrorCode::BindFailure:
        return 500;
    default:
        return 422;
    }
}

std::map<std::string, std::string> environment() {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    return env;
}

namespace {

void set_bind(Config& c, const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) fail(ErrorCode::InvalidRequest, "bind must be host:port, got '" + bind + "'");
    c.host = bind.substr(0, colon);
    c.port = static_cast<int>(parse_u64(bind.substr(colon + 1), "port"));
}

bool parse_bool(const std::string& s) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    fail(ErrorCode::InvalidRequest, "bad boolean '" + s + "'");
}

} // namespace

Config load_config(const std::optional<std::filesystem::path>& file, const std::map<std::string, std::string>& env) {
    Config c;
    if (file) {
        std::ifstream in(*file);
        if (!in) fail(ErrorCode::InvalidRequest, "cannot read config " + file->string());
        std::stringstream ss;
        ss << in.rdbuf();
        const Json j = parse_json(ss.str());
        if (auto b = optional_field<std::string>(j, "bind")) set_bind(c, *b);
        if (auto p = optional_field<std::string>(j, "log_path")) c.log_path = *p;
        if (auto p = optional_field<std::string>(j, "token_file")) c.token_file = *p;
        if (auto h = optional_field<double>(j, "heartbeat_seconds")) c.heartbeat_seconds = *h;
        if (auto f = optional_field<bool>(j, "fsync")) c.fsync = *f;
        if (auto t = optional_field<std::size_t>(j, "threads")) c.threads = *t;
        // relative paths are relative to the config file
        const auto base = file->parent_path();
        if (c.log_path.is_relative() && j.contains("log_path")) c.log_path = base / c.log_path;
        if (c.token_file.is_relative() && j.contains("token_file")) c.token_file = base / c.token_file;
    }
    auto get = [&](const char* k) -> const std::string* {
        auto it = env.find(k);
        return it == env.end() ? nullptr : &it->second;
    };
    if (auto v = get("CM_BIND")) set_bind(c, *v);
    if (auto v = get("CM_LOG_PATH")) c.log_path = *v;
    if (auto v = get("CM_TOKEN_FILE")) c.token_file = *v;
    if (auto v = get("CM_HEARTBEAT_SECONDS")) c.heartbeat_seconds = std::stod(*v);
    if (auto v = get("CM_FSYNC")) c.fsync = parse_bool(*v);
    if (auto v = get("CM_THREADS")) c.threads = parse_u64(*v, "CM_THREADS");
    if (c.heartbeat_seconds <= 0) fail(ErrorCode::InvalidRequest, "heartbeat_seconds must be positive");
    return c;
}

TokenTable TokenTable::from_json(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidRequest, "token table must map token -> principal");
    TokenTable t;
    std::set<std::string> principals;
    for (const auto& [token, principal] : j.items()) {
        if (!principal.is_string() || token.empty()) fail(ErrorCode::InvalidRequest, "bad token entry");
        const auto p = principal.get<std::string>();
        if (!principals.insert(p).second) fail(ErrorCode::InvalidRequest, "principal '" + p + "' has two tokens");
        t.by_token_.emplace(token, p);
    }
    return t;
}

TokenTable TokenTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidRequest, "cannot read token file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(parse_json(ss.str()));
}

std::optional<std::string> TokenTable::principal(const std::string& token) const {
    auto it = by_token_.find(token);
    if (it == by_token_.end()) return std::nullopt;
    return it->second;
}

Server::Server(TokenTable tokens, ServerOptions options)
    : tokens_(std::move(tokens)), options_(options), http_(std::make_unique<httplib::Server>()) {
    const auto threads = options_.threads;
    http_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    http_->set_write_timeout(5, 0);
    http_->set_tcp_nodelay(true);
    routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
    if (bound <= 0) fail(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void Server::start() {
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void Server::attach(Service& service) { service_.store(&service); }

void Server::stop() {
    if (stopping_.exchange(true)) {
        if (thread_.joinable()) thread_.join();
        return;
    }
    if (auto* svc = service_.load()) svc->close_streams();
    http_->stop();
    if (thread_.joinable()) thread_.join();
}

std::string Server::authenticate(const httplib::Request& req) const {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (header.rfind(kBearer, 0) != 0) fail(ErrorCode::Unauthorized, "missing bearer token");
    auto p = tokens_.principal(header.substr(kBearer.size()));
    if (!p) fail(ErrorCode::Unauthorized, "unknown token");
    return *p;
}

void Server::handle(const httplib::Request& req, httplib::Response& res, bool admin_only,
                    const std::function<Json(Service&, const std::string&)>& body) {
    Service* svc = service_.load();
    if (!svc) {
        reply(res, 503, canonical(Json{{"code", "NotReady"}, {"message", "replay in progress"}}));
        return;
    }
    std::string principal;
    try {
        principal = authenticate(req);
        if (admin_only && principal != kAdminPrincipal) fail(ErrorCode::Forbidden, "admin only");
        if (!admin_only && !is_participant(principal) && req.method != "GET") {
            fail(ErrorCode::Forbidden, "admin does not act as a participant");
        }
    } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e));
        return;
    }

    auto run = [&](int& status, std::string& out) {
        try {
            out = canonical(body(*svc, principal));
            status = 200;
        } catch (const Error& e) {
            status = http_status(e.code());
            out = error_body(e);
        } catch (const std::exception& e) {
            status = 422;
            out = error_body(Error(ErrorCode::InvalidRequest, e.what()));
        }
    };

    const auto key = req.get_header_value("Idempotency-Key");
    int status = 0;
    std::string out;
    if (key.empty()) {
        run(status, out);
    } else {
        const std::string fingerprint = req.method + " " + req.path + " " + req.body;
        std::lock_guard lock(idem_mu_);
        auto it = idempotent_.find({principal, key});
        if (it != idempotent_.end()) {
            if (it->second.fingerprint == fingerprint) {
                status = it->second.status;
                out = it->second.body;
            } else {
                Error e(ErrorCode::IdempotencyKeyReuse, "idempotency key reused with a different request");
                status = http_status(e.code());
                out = error_body(e);
            }
        } else {
            run(status, out);
            idempotent_.emplace(std::pair{principal, key}, Cached{fingerprint, status, out});
        }
    }
    reply(res, status, out);
}

void Server::routes() {
    auto& s = *http_;
    using Req = const httplib::Request&;
    using Res = httplib::Response&;

    s.Get("/healthz", [](Req, Res res) { reply(res, 200, R"({"status":"ok"})"); });
    s.Get("/readyz", [this](Req, Res res) {
        if (ready()) {
            reply(res, 200, R"({"status":"ready"})");
        } else {
            reply(res, 503, R"({"status":"replaying"})");
        }
    });

    s.Post("/participants", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            const Json b = body_of(req);
            return svc.execute(RegisterParticipant{field<Role>(b, "role"), optional_field<std::string>(b, "domain"),
                                                   field_or<std::string>(b, "display_name", "")});
        });
    });
    s.Post("/circles", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            const Json b = body_of(req);
            return svc.execute(CreateCircle{field_or<std::set<std::string>>(b, "experts", {}),
                                            field_or<std::set<std::string>>(b, "patients", {})});
        });
    });
    s.Post(R"(/circles/([^/]+)/members)", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            const Json b = body_of(req);
            return svc.execute(AddCircleMember{req.matches[1], field<std::string>(b, "participant")});
        });
    });
    s.Post("/notifications", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            const Json b = body_of(req);
            return svc.execute(SubmitNotification{who, field<std::string>(b, "circle"), field<std::string>(b, "type"),
                                                  field_or<Payload>(b, "payload", Payload{})});
        });
    });
    s.Post(R"(/notifications/([^/]+)/approvals)", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            const Json b = body_of(req);
            return svc.execute(RespondApproval{who, req.matches[1], field<Verdict>(b, "verdict")});
        });
    });
    s.Get(R"(/notifications/([^/]+))", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            return svc.read([&](const State& st) -> Json {
                auto it = st.notifications.find(req.matches[1]);
                if (it == st.notifications.end()) fail(ErrorCode::UnknownNotification, "unknown notification");
                const auto& circle = st.circles.at(it->second.circle);
                if (is_participant(who) && !circle.experts.contains(who)) {
                    fail(ErrorCode::Forbidden, "only the circle's experts read notifications");
                }
                Json out{{"notification", it->second}};
                if (auto sess = st.sessions.find(it->first); sess != st.sessions.end()) out["session"] = sess->second;
                return out;
            });
        });
    });
    s.Post("/tasks", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            const Json b = body_of(req);
            return svc.execute(CreateTask{who, field<std::string>(b, "circle"), field<std::string>(b, "patient"),
                                          field_or<std::vector<std::string>>(b, "instructions", {}),
                                          optional_field<Schedule>(b, "schedule"),
                                          field_or<std::vector<Goal>>(b, "goals", {})});
        });
    });
    s.Patch(R"(/tasks/([^/]+))", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            const Json b = body_of(req);
            return svc.execute(ApplyTaskChange{who, req.matches[1], field_or<TaskDiff>(b, "diff", TaskDiff{}),
                                               field_or<bool>(b, "notify_patient", true)});
        });
    });
    s.Get(R"(/tasks/([^/]+))", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            return svc.read([&](const State& st) -> Json {
                auto it = st.tasks.find(req.matches[1]);
                if (it == st.tasks.end()) fail(ErrorCode::UnknownTask, "unknown task");
                const auto& circle = st.circles.at(it->second.circle);
                if (is_participant(who) && !circle.experts.contains(who) && it->second.patient != who) {
                    fail(ErrorCode::Forbidden, "not your task");
                }
                return Json(it->second);
            });
        });
    });
    s.Post(R"(/tasks/([^/]+)/reports)", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            const Json b = body_of(req);
            Json cmd{{"cmd", "report"}, {"patient", who}, {"task_id", req.matches[1]},
                     {"metrics", field_or<Json>(b, "metrics", Json::object())}};
            return svc.execute(command_from_json(cmd));
        });
    });
    s.Post(R"(/tasks/([^/]+)/goals/([^/]+)/reached)", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            return svc.execute(RecordGoalReached{who, req.matches[1], req.matches[2]});
        });
    });
    s.Post("/types", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            return svc.execute(RegisterNotificationType{body_of(req).get<NotificationTypeSpec>()});
        });
    });
    s.Get("/mailbox", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            if (!is_participant(who)) fail(ErrorCode::Forbidden, "admin has no mailbox");
            if (req.has_param("mailbox") && req.get_param_value("mailbox") != who) {
                fail(ErrorCode::Forbidden, "not your mailbox");
            }
            const auto after = query_u64(req, "after_seq", 0);
            const auto max = query_u64(req, "max_batch", kDefaultMaxBatch);
            if (max == 0) fail(ErrorCode::InvalidRequest, "max_batch must be positive");
            auto deliveries = svc.poll(who, after, max);
            const auto cursor = svc.read([&](const State& st) { return st.mailboxes.cursor(who); });
            return Json{{"deliveries", deliveries}, {"cursor", cursor}};
        });
    });
    s.Post("/mailbox/ack", [this](Req req, Res res) {
        handle(req, res, false, [&](Service& svc, const std::string& who) {
            return svc.execute(AckMailbox{who, field<std::uint64_t>(body_of(req), "up_to_seq")});
        });
    });
    s.Get("/stream", [this](Req req, Res res) { stream(req, res); });
    s.Get("/state", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            return svc.read([](const State& st) { return st.to_json(); });
        });
    });
    s.Get("/events", [this](Req req, Res res) {
        handle(req, res, true, [&](Service& svc, const std::string&) {
            Json list = Json::array();
            for (const auto& e : svc.events(query_u64(req, "after_seq", 0) + 1)) {
                list.push_back(Json{{"seq", e.seq}, {"kind", e.kind}, {"body", e.body}, {"recorded_at", e.recorded_at}});
            }
            return Json{{"events", list}};
        });
    });
}

void Server::stream(const httplib::Request& req, httplib::Response& res) {
    Service* svc = service_.load();
    if (!svc) {
        reply(res, 503, R"({"code":"NotReady","message":"replay in progress"})");
        return;
    }
    std::shared_ptr<ResumableStream> live;
    try {
        const auto who = authenticate(req);
        if (!is_participant(who)) fail(ErrorCode::Forbidden, "admin has no mailbox");
        if (req.has_param("mailbox") && req.get_param_value("mailbox") != who) {
            fail(ErrorCode::Forbidden, "not your mailbox");
        }
        live = std::make_shared<ResumableStream>(*svc, who, query_u64(req, "after_seq", 0));
    } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e));
        return;
    }

    res.status = 200;
    res.set_header("Cache-Control", "no-store");
    const auto heartbeat = options_.heartbeat;
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, live, heartbeat](std::size_t, httplib::DataSink& sink) {
            if (stopping_) return false;
            std::string frame;
            if (auto d = live->next(heartbeat)) {
                frame = "id: " + std::to_string(d->seq) + "\ndata: " + canonical(Json(*d)) + "\n\n";
                // drain whatever else is already buffered into the same write
                while (auto more = live->next(std::chrono::milliseconds(0))) {
                    frame += "id: " + std::to_string(more->seq) + "\ndata: " + canonical(Json(*more)) + "\n\n";
                }
            } else if (live->ended()) {
                return false;
            } else {
                frame = ":hb\n\n";
            }
            return sink.write(frame.data(), frame.size());
        },
        [live](bool) { live->close(); });
}

int serve(const Config& config, const std::atomic<bool>& stop, std::ostream& log) {
    TokenTable tokens;
    try {
        tokens = TokenTable::load(config.token_file);
    } catch (const Error& e) {
        log << "config error: " << e.what() << '\n';
        return 2;
    }
    Server server(std::move(tokens),
                  ServerOptions{std::chrono::milliseconds(static_cast<long>(config.heartbeat_seconds * 1000)),
                                config.threads});
    int port = 0;
    try {
        port = server.bind(config.host, config.port);
    } catch (const Error& e) {
        log << "BindFailure: " << e.what() << '\n';
        return 3;
    }
    server.start();
    log << "listening on " << config.host << ':' << port << std::endl;

    std::unique_ptr<Service> service;
    try {
        auto events = FileEventLog::open(config.log_path, FileLogOptions{config.fsync});
        if (events->truncated_bytes() > 0) {
            log << "dropped " << events->truncated_bytes() << " bytes of torn tail from " << config.log_path << '\n';
        }
        ServiceOptions opts;
        opts.snapshot_path = config.log_path.string() + ".snapshot";
        service = std::make_unique<Service>(std::move(events), std::move(opts));
    } catch (const Error& e) {
        log << "LogCorrupt: " << e.what() << std::endl;
        server.stop();
        return 1;
    }
    server.attach(*service);
    log << "ready at seq " << service->head() << std::endl;

    while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));

    log << "shutting down" << std::endl;
    server.stop();
    service->shutdown();
    return 0;
}

} // namespace cm::api
