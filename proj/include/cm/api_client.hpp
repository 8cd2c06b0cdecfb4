#pragma once

#include "cm/canonical.hpp"
#include "cm/mailbox.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Client;
}

namespace cm::api {

/// Percent-encodes one path segment.
std::string encode_segment(std::string_view segment);

struct HttpResponse {
    int status = 0;
    Json body;
};

/// Blocking JSON client for one principal. Safe to share across threads;
/// requests are serialized on one keep-alive connection.
class ApiClient {
public:
    ApiClient(const std::string& base_url, std::string token);
    ~ApiClient();

    /// Throws TargetUnreachable when no response arrives.
    HttpResponse request(const std::string& method, const std::string& path, const Json& body = nullptr,
                         const std::string& idempotency_key = {});
    /// Like request() but throws Error (code from the response body) on non-2xx.
    Json call(const std::string& method, const std::string& path, const Json& body = nullptr,
              const std::string& idempotency_key = {});

private:
    std::string token_;
    std::mutex mu_;
    std::unique_ptr<httplib::Client> http_;
};

/// Event-stream reader on a background thread. Frames are parsed into
/// deliveries; `ended()` turns true when the server closes the stream or
/// close() is called.
class EventStreamClient {
public:
    EventStreamClient(const std::string& base_url, const std::string& token, std::uint64_t after_seq);
    ~EventStreamClient();

    EventStreamClient(const EventStreamClient&) = delete;
    EventStreamClient& operator=(const EventStreamClient&) = delete;

    std::optional<Delivery> next(std::chrono::milliseconds timeout);
    bool ended() const;
    /// HTTP status of the stream response, 0 until headers arrive.
    int status() const { return status_.load(); }
    std::size_t heartbeats() const { return heartbeats_.load(); }
    void close();

private:
    void feed(const char* data, std::size_t n);

    std::unique_ptr<httplib::Client> http_;
    std::thread reader_;
    std::atomic<bool> closing_{false};
    std::atomic<int> status_{0};
    std::atomic<std::size_t> heartbeats_{0};

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Delivery> ready_;
    bool done_ = false;
    std::string partial_;
    std::string data_;
};

} // namespace cm::api
