#pragma once

#include "cm/error.hpp"
#include "cm/service.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
struct Request;
struct Response;
} // namespace httplib

namespace cm::api {

/// Principal allowed to register participants, circles and types.
inline constexpr std::string_view kAdminPrincipal = "admin";

struct Config {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path log_path = "cm-events.log";
    std::filesystem::path token_file = "tokens.json";
    double heartbeat_seconds = 15.0;
    bool fsync = true;
    std::size_t threads = 64;
};

/// Reads the JSON config file (if given), then applies CM_BIND, CM_LOG_PATH,
/// CM_TOKEN_FILE, CM_HEARTBEAT_SECONDS, CM_FSYNC and CM_THREADS from `env`.
Config load_config(const std::optional<std::filesystem::path>& file, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment();

/// Static token -> principal map. One token per principal.
class TokenTable {
public:
    static TokenTable from_json(const Json& j);
    static TokenTable load(const std::filesystem::path& path);

    std::optional<std::string> principal(const std::string& token) const;
    std::size_t size() const { return by_token_.size(); }

private:
    std::map<std::string, std::string> by_token_;
};

int http_status(ErrorCode code);

struct ServerOptions {
    std::chrono::milliseconds heartbeat{15000};
    std::size_t threads = 64;
};

/// HTTP/1.1 face of a Service. Every mutating endpoint maps onto exactly one
/// coordinator command; the event-stream endpoint frames deliveries as
/// `id: <seq>` / `data: <canonical delivery>` messages.
class Server {
public:
    Server(TokenTable tokens, ServerOptions options);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds (port 0 picks a free one) and returns the bound port. Throws BindFailure.
    int bind(const std::string& host, int port);
    /// Serves on a background thread until stop().
    void start();

    /// Makes the service reachable; /readyz reports ok from here on.
    void attach(Service& service);
    bool ready() const { return service_.load() != nullptr; }

    /// Ends streams, stops accepting connections and waits for in-flight requests.
    void stop();

private:
    struct Cached {
        std::string fingerprint;
        int status;
        std::string body;
    };

    void routes();
    void handle(const httplib::Request& req, httplib::Response& res, bool admin_only,
                const std::function<Json(Service&, const std::string& principal)>& body);
    void stream(const httplib::Request& req, httplib::Response& res);
    std::string authenticate(const httplib::Request& req) const;

    TokenTable tokens_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    std::atomic<Service*> service_{nullptr};
    std::atomic<bool> stopping_{false};
    std::mutex idem_mu_;
    std::map<std::pair<std::string, std::string>, Cached> idempotent_;
};

/// Full process lifecycle: bind, open and replay the log, serve until
/// `stop` becomes true, drain. Returns the process exit code.
int serve(const Config& config, const std::atomic<bool>& stop, std::ostream& log);

} // namespace cm::api
