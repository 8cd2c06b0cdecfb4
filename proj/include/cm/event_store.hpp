#pragma once

#include "cm/events.hpp"
#include "cm/state.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cm {

inline constexpr std::string_view kLogHeader = "cm-log v1";
inline constexpr std::uint64_t kSnapshotInterval = 1000;

/// Append-only event log. One appender, any number of readers.
class EventLog {
public:
    virtual ~EventLog() = default;

    /// Appends one command's events atomically. Their seqs must continue the
    /// head without gaps. Returns the new head.
    virtual std::uint64_t append(std::span<const DomainEvent> events) = 0;

    virtual std::uint64_t head() const = 0;

    /// Events with seq >= from, in order, up to the current head.
    virtual std::vector<DomainEvent> read_from(std::uint64_t from) const = 0;
};

class MemoryEventLog : public EventLog {
public:
    std::uint64_t append(std::span<const DomainEvent> events) override;
    std::uint64_t head() const override;
    std::vector<DomainEvent> read_from(std::uint64_t from) const override;

protected:
    void check_continuity(std::span<const DomainEvent> events) const;
    void push(std::span<const DomainEvent> events);

    mutable std::shared_mutex mu_;
    std::vector<DomainEvent> events_;
};

struct FileLogOptions {
    bool fsync = true;
};

/// Newline-delimited records behind a "cm-log v1" header line. A torn final
/// record (no terminating newline) is cut off on open; any other damage is
/// reported as CorruptRecord.
class FileEventLog : public MemoryEventLog {
public:
    static std::unique_ptr<FileEventLog> open(const std::filesystem::path& path, FileLogOptions options = {});
    ~FileEventLog() override;

    FileEventLog(const FileEventLog&) = delete;
    FileEventLog& operator=(const FileEventLog&) = delete;

    std::uint64_t append(std::span<const DomainEvent> events) override;

    const std::filesystem::path& path() const { return path_; }
    /// Bytes dropped from a torn tail when the log was opened.
    std::uint64_t truncated_bytes() const { return truncated_bytes_; }

private:
    FileEventLog(std::filesystem::path path, FileLogOptions options);

    std::filesystem::path path_;
    FileLogOptions options_;
    int fd_ = -1;
    std::uint64_t truncated_bytes_ = 0;
};

/// One record line without the trailing newline: canonical json, a tab, crc32 hex.
std::string encode_record(const DomainEvent& e);
/// Throws CorruptRecord naming `expected_seq` when framing, checksum or seq is off.
DomainEvent decode_record(std::string_view line, std::uint64_t expected_seq);

/// SHA-256 over the digest lines (one per event, newline-terminated).
std::string log_digest(std::span<const DomainEvent> events);

/// Pure fold of the whole log from an empty state.
State replay(const EventLog& log);

/// Parses a log file without opening it for writing (read-only replay).
std::vector<DomainEvent> read_log_file(const std::filesystem::path& path);

/// Snapshot files are advisory: {"seq": n, "state": {...}}.
void write_snapshot(const std::filesystem::path& path, const State& state);
State read_snapshot(const std::filesystem::path& path);

} // namespace cm
