#include "cm/api_client.hpp"

#include "cm/error.hpp"

#include <httplib.h>

namespace cm::api {

namespace {

httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

std::unique_ptr<httplib::Client> connect(const std::string& base_url) {
    auto c = std::make_unique<httplib::Client>(base_url);
    if (!c->is_valid()) fail(ErrorCode::TargetUnreachable, "bad target url '" + base_url + "'");
    c->set_keep_alive(true);
    c->set_tcp_nodelay(true);
    c->set_connection_timeout(5, 0);
    c->set_read_timeout(30, 0);
    return c;
}

} // namespace

std::string encode_segment(std::string_view segment) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char ch : segment) {
        if (std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.' || ch == '~') {
            out += static_cast<char>(ch);
        } else {
            out += '%';
            out += kHex[ch >> 4];
            out += kHex[ch & 0xF];
        }
    }
    return out;
}

ApiClient::ApiClient(const std::string& base_url, std::string token)
    : token_(std::move(token)), http_(connect(base_url)) {}

ApiClient::~ApiClient() = default;

HttpResponse ApiClient::request(const std::string& method, const std::string& path, const Json& body,
                                const std::string& idempotency_key) {
    auto headers = auth(token_);
    if (!idempotency_key.empty()) headers.emplace("Idempotency-Key", idempotency_key);
    const std::string text = body.is_null() ? std::string() : canonical(body);

    std::lock_guard lock(mu_);
    httplib::Result r;
    if (method == "GET") {
        r = http_->Get(path, headers);
    } else if (method == "POST") {
        r = http_->Post(path, headers, text, "application/json");
    } else if (method == "PATCH") {
        r = http_->Patch(path, headers, text, "application/json");
    } else {
        fail(ErrorCode::InvalidRequest, "unsupported method " + method);
    }
    if (!r) fail(ErrorCode::TargetUnreachable, method + " " + path + ": " + httplib::to_string(r.error()));
    HttpResponse out{r->status, Json()};
    if (!r->body.empty()) out.body = Json::parse(r->body, nullptr, false);
    return out;
}

Json ApiClient::call(const std::string& method, const std::string& path, const Json& body,
                     const std::string& idempotency_key) {
    auto r = request(method, path, body, idempotency_key);
    if (r.status >= 200 && r.status < 300) return r.body;
    std::string code = "InvalidRequest";
    std::string message = "HTTP " + std::to_string(r.status);
    if (r.body.is_object()) {
        code = r.body.value("code", code);
        message = r.body.value("message", message);
    }
    ErrorCode parsed = ErrorCode::InvalidRequest;
    try {
        parsed = error_code_from_string(code);
    } catch (const Error&) {
        // NotReady and other transport-only codes
        parsed = r.status == 503 ? ErrorCode::TargetUnreachable : ErrorCode::InvalidRequest;
    }
    throw Error(parsed, message);
}

EventStreamClient::EventStreamClient(const std::string& base_url, const std::string& token,
                                     std::uint64_t after_seq)
    : http_(connect(base_url)) {
    http_->set_keep_alive(false);
    http_->set_read_timeout(300, 0);
    const std::string path = "/stream?after_seq=" + std::to_string(after_seq);
    reader_ = std::thread([this, path, headers = auth(token)] {
        http_->Get(
            path, headers,
            [this](const httplib::Response& res) {
                status_ = res.status;
                return res.status == 200 && !closing_;
            },
            [this](const char* data, std::size_t n) {
                if (closing_) return false;
                feed(data, n);
                return true;
            });
        std::lock_guard lock(mu_);
        done_ = true;
        cv_.notify_all();
    });
}

EventStreamClient::~EventStreamClient() { close(); }

void EventStreamClient::feed(const char* data, std::size_t n) {
    std::lock_guard lock(mu_);
    partial_.append(data, n);
    std::size_t start = 0;
    for (auto nl = partial_.find('\n', start); nl != std::string::npos; nl = partial_.find('\n', start)) {
        std::string_view line(partial_.data() + start, nl - start);
        start = nl + 1;
        if (line.empty()) {
            if (!data_.empty()) {
                ready_.push_back(Json::parse(data_).get<Delivery>());
                data_.clear();
                cv_.notify_all();
            }
        } else if (line.front() == ':') {
            ++heartbeats_;
        } else if (line.rfind("data: ", 0) == 0) {
            data_.append(line.substr(6));
        }
    }
    partial_.erase(0, start);
}

std::optional<Delivery> EventStreamClient::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !ready_.empty() || done_; });
    if (ready_.empty()) return std::nullopt;
    auto d = std::move(ready_.front());
    ready_.pop_front();
    return d;
}

bool EventStreamClient::ended() const {
    std::lock_guard lock(mu_);
    return done_ && ready_.empty();
}

void EventStreamClient::close() {
    closing_ = true;
    http_->stop();
    if (reader_.joinable()) reader_.join();
}

} // namespace cm::api
