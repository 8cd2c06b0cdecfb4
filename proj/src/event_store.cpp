#include "cm/event_store.hpp"

#include "cm/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

namespace cm {

namespace {

struct ParsedLog {
    std::vector<DomainEvent> events;
    std::uint64_t valid_bytes = 0;
    bool had_header = false;
};

ParsedLog parse_log(std::string_view content) {
    ParsedLog out;
    if (content.empty()) return out;
    auto nl = content.find('\n');
    if (nl == std::string_view::npos) {
        // A torn header is only acceptable as a prefix of the real one.
        if (kLogHeader.substr(0, content.size()) != content) {
            fail(ErrorCode::CorruptRecord, "record 0: missing '" + std::string(kLogHeader) + "' header");
        }
        return out;
    }
    if (content.substr(0, nl) != kLogHeader) {
        fail(ErrorCode::CorruptRecord, "record 0: bad header '" + std::string(content.substr(0, nl)) + "'");
    }
    out.had_header = true;
    std::size_t pos = nl + 1;
    out.valid_bytes = pos;
    while (pos < content.size()) {
        nl = content.find('\n', pos);
        if (nl == std::string_view::npos) break; // torn tail
        out.events.push_back(decode_record(content.substr(pos, nl - pos), out.events.size() + 1));
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::StorageFailure, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_all(int fd, std::string_view bytes, const std::filesystem::path& path) {
    while (!bytes.empty()) {
        const auto n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::StorageFailure, "write " + path.string() + ": " + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

} // namespace

std::string digest_line(const DomainEvent& e) {
    return canonical(Json{{"seq", e.seq}, {"kind", e.kind}, {"body", e.body}});
}

std::string encode_record(const DomainEvent& e) {
    std::string json = canonical(Json{{"seq", e.seq}, {"kind", e.kind}, {"body", e.body}, {"recorded_at", e.recorded_at}});
    const std::string crc = crc32_hex(json);
    json.push_back('\t');
    json += crc;
    return json;
}

DomainEvent decode_record(std::string_view line, std::uint64_t expected_seq) {
    const auto bad = [&](const std::string& why) -> DomainEvent {
        fail(ErrorCode::CorruptRecord, "record " + std::to_string(expected_seq) + ": " + why);
    };
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos || line.size() - tab - 1 != 8) return bad("no checksum");
    const auto json_text = line.substr(0, tab);
    if (crc32_hex(json_text) != line.substr(tab + 1)) return bad("checksum mismatch");
    Json j;
    try {
        j = Json::parse(json_text.begin(), json_text.end());
    } catch (const Json::exception& ex) {
        return bad(ex.what());
    }
    DomainEvent e;
    try {
        e.seq = j.at("seq").get<std::uint64_t>();
        e.kind = j.at("kind").get<std::string>();
        e.body = j.at("body");
        e.recorded_at = j.value("recorded_at", std::int64_t{0});
    } catch (const Json::exception& ex) {
        return bad(ex.what());
    }
    if (e.seq != expected_seq) return bad("seq " + std::to_string(e.seq) + " out of order");
    return e;
}

void MemoryEventLog::check_continuity(std::span<const DomainEvent> events) const {
    std::uint64_t next = events_.size() + 1;
    for (const auto& e : events) {
        if (e.seq != next) {
            fail(ErrorCode::StorageFailure, "append expects seq " + std::to_string(next) + ", got " + std::to_string(e.seq));
        }
        ++next;
    }
}

void MemoryEventLog::push(std::span<const DomainEvent> events) {
    events_.insert(events_.end(), events.begin(), events.end());
}

std::uint64_t MemoryEventLog::append(std::span<const DomainEvent> events) {
    std::unique_lock lock(mu_);
    check_continuity(events);
    push(events);
    return events_.size();
}

std::uint64_t MemoryEventLog::head() const {
    std::shared_lock lock(mu_);
    return events_.size();
}

std::vector<DomainEvent> MemoryEventLog::read_from(std::uint64_t from) const {
    std::shared_lock lock(mu_);
    if (from == 0) from = 1;
    if (from > events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(from - 1), events_.end()};
}

FileEventLog::FileEventLog(std::filesystem::path path, FileLogOptions options)
    : path_(std::move(path)), options_(options) {}

FileEventLog::~FileEventLog() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<FileEventLog> FileEventLog::open(const std::filesystem::path& path, FileLogOptions options) {
    std::unique_ptr<FileEventLog> log(new FileEventLog(path, options));
    std::string content;
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) content = read_file(path);

    ParsedLog parsed = parse_log(content);
    if (parsed.valid_bytes < content.size()) {
        log->truncated_bytes_ = content.size() - parsed.valid_bytes;
        std::filesystem::resize_file(path, parsed.valid_bytes, ec);
        if (ec) fail(ErrorCode::StorageFailure, "truncate " + path.string() + ": " + ec.message());
    }
    log->fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (log->fd_ < 0) fail(ErrorCode::StorageFailure, "open " + path.string() + ": " + std::strerror(errno));
    if (!parsed.had_header) {
        if (parsed.valid_bytes == 0 && !content.empty()) {
            std::filesystem::resize_file(path, 0, ec);
        }
        write_all(log->fd_, std::string(kLogHeader) + "\n", path);
        if (options.fsync) ::fsync(log->fd_);
    }
    log->events_ = std::move(parsed.events);
    return log;
}

std::uint64_t FileEventLog::append(std::span<const DomainEvent> events) {
    std::unique_lock lock(mu_);
    check_continuity(events);
    std::string buf;
    for (const auto& e : events) {
        buf += encode_record(e);
        buf.push_back('\n');
    }
    write_all(fd_, buf, path_);
    if (options_.fsync && ::fsync(fd_) != 0) {
        fail(ErrorCode::StorageFailure, "fsync " + path_.string() + ": " + std::strerror(errno));
    }
    push(events);
    return events_.size();
}

std::string log_digest(std::span<const DomainEvent> events) {
    std::string all;
    for (const auto& e : events) {
        all += digest_line(e);
        all.push_back('\n');
    }
    return sha256_hex(all);
}

State replay(const EventLog& log) {
    const auto events = log.read_from(1);
    return fold(events);
}

std::vector<DomainEvent> read_log_file(const std::filesystem::path& path) {
    return parse_log(read_file(path)).events;
}

void write_snapshot(const std::filesystem::path& path, const State& state) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::StorageFailure, "cannot write " + tmp.string());
        out << canonical(Json{{"seq", state.head}, {"state", state.to_json()}}) << '\n';
        if (!out) fail(ErrorCode::StorageFailure, "cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::StorageFailure, "rename " + tmp.string() + ": " + ec.message());
}

State read_snapshot(const std::filesystem::path& path) {
    const Json j = parse_json(read_file(path));
    return State::from_json(j.at("state"));
}

} // namespace cm
