#pragma once

#include "cm/commands.hpp"
#include "cm/events.hpp"
#include "cm/mailbox.hpp"
#include "cm/service.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cm::api {
class ApiClient;
}

namespace cm::harness {

/// HTTP form of a command: who sends it and where.
struct WireRequest {
    std::string principal;
    std::string method;
    std::string path;
    Json body;
};

WireRequest to_wire(const Command& command);

class StreamReader {
public:
    virtual ~StreamReader() = default;
    virtual std::optional<Delivery> next(std::chrono::milliseconds timeout) = 0;
    virtual bool ended() const = 0;
};

/// What the scenario runner and the load generator drive.
class Target {
public:
    virtual ~Target() = default;
    /// Throws Error with the coordinator's code when the command is rejected.
    virtual Json execute(const Command& command) = 0;
    virtual std::vector<Delivery> mailbox(const ParticipantId& owner) = 0;
    virtual std::vector<DomainEvent> events() = 0;
    /// {"notification": ..., "session"?: ...}
    virtual Json notification(const NotificationId& id) = 0;
    virtual std::unique_ptr<StreamReader> open_stream(const ParticipantId& owner, std::uint64_t after_seq) = 0;
    /// Logical time for subsequent commands; ignored by remote targets.
    virtual void set_tick(std::uint64_t) {}
};

/// A private Service over an in-memory log. recorded_at is the logical tick.
class InProcessTarget : public Target {
public:
    explicit InProcessTarget(std::size_t stream_buffer = kDefaultStreamBuffer);

    Json execute(const Command& command) override;
    std::vector<Delivery> mailbox(const ParticipantId& owner) override;
    std::vector<DomainEvent> events() override;
    Json notification(const NotificationId& id) override;
    std::unique_ptr<StreamReader> open_stream(const ParticipantId& owner, std::uint64_t after_seq) override;
    void set_tick(std::uint64_t tick) override { tick_ = tick; }

    Service& service() { return *service_; }

private:
    std::atomic<std::uint64_t> tick_{0};
    std::unique_ptr<Service> service_;
};

/// A running server. Tokens follow the "tok-<principal>" convention.
class HttpTarget : public Target {
public:
    explicit HttpTarget(std::string base_url);
    ~HttpTarget() override;

    Json execute(const Command& command) override;
    std::vector<Delivery> mailbox(const ParticipantId& owner) override;
    std::vector<DomainEvent> events() override;
    Json notification(const NotificationId& id) override;
    std::unique_ptr<StreamReader> open_stream(const ParticipantId& owner, std::uint64_t after_seq) override;

private:
    api::ApiClient& client(const std::string& principal);

    std::string base_url_;
    std::mutex mu_;
    std::map<std::string, std::unique_ptr<api::ApiClient>> clients_;
};

std::string token_for(const std::string& principal);
/// Token table for the admin plus participants p1..p<n>.
Json token_table(std::size_t participants);

struct CastMember {
    std::string name;
    Role role = Role::Expert;
    std::optional<std::string> domain;
};

struct CircleDecl {
    std::string name;
    std::vector<std::string> experts;
    std::vector<std::string> patients;
};

struct Step {
    enum class Kind { Command, ExpectMailbox, ExpectNotification, Fault };

    Kind kind = Kind::Command;
    std::size_t line = 0;
    std::uint64_t tick = 0;
    std::string actor; // cast name or "admin"
    std::string cmd;
    Json args = Json::object();
    std::optional<std::string> label;
    Json expect; // {"error": code} | {"result": {...}} | null
    std::string target; // owner or notification reference for checks
    std::string fault;  // "drop" | "reconnect"
};

struct Scenario {
    std::string name;
    std::vector<CastMember> cast;
    std::vector<CircleDecl> circles;
    std::vector<Step> steps;
    std::optional<std::filesystem::path> golden;
};

/// JSON lines: a header object, then one step per line. Blank lines and
/// lines starting with '#' are skipped. Throws ParseError "line N: ...".
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& file);

struct StepReport {
    std::size_t index = 0;
    std::size_t line = 0;
    std::string what;
    std::string outcome;
    bool passed = true;
    std::string diff;
};

struct ScenarioReport {
    std::string name;
    std::vector<StepReport> steps;
    std::vector<std::string> digest_lines;
    std::string digest;
    bool golden_checked = false;
    bool golden_matched = true;
    std::string golden_diff;
    bool streams_matched = true;
    std::string stream_diff;
    double seconds = 0;

    bool passed() const;
    Json to_json() const;
    std::string text() const;
};

ScenarioReport run_scenario(const Scenario& scenario, Target& target);

/// Digest-line file: one canonical {seq, kind, body} per line.
void write_golden(const std::filesystem::path& file, const std::vector<std::string>& lines);

struct OracleReport {
    std::map<int, std::size_t> cases_per_k;
    std::size_t total = 0;
    std::vector<std::string> mismatches;
    double seconds = 0;

    bool passed() const { return mismatches.empty(); }
    Json to_json() const;
};

/// Every verdict assignment and response order for 1..k_max approvers,
/// checked against an independent reference machine.
OracleReport oracle_check(int k_max);

struct LoadOptions {
    std::size_t experts = 5;
    std::size_t patients = 1;
    std::size_t count = 100;
    std::map<std::string, double> mix{{"T1", 1.0}};
    std::size_t senders = 8;
    std::size_t experts_per_circle = 3;
    std::uint64_t seed = 1;
    std::chrono::milliseconds settle_timeout{30000};
};

/// "t1=0.5,t2=0.5" -> {{"T1", .5}, {"T2", .5}}; the weights must sum to 1.
std::map<std::string, double> parse_mix(std::string_view text);

struct LatencySummary {
    std::size_t samples = 0;
    double p50 = 0, p95 = 0, p99 = 0, max = 0;
};

LatencySummary summarize(std::vector<double> millis);

struct LoadReport {
    std::size_t participants = 0;
    std::size_t experts = 0;
    std::size_t patients = 0;
    std::size_t notifications = 0;
    std::size_t commands = 0;
    std::size_t command_errors = 0;
    std::size_t deliveries_enqueued = 0;
    std::size_t deliveries_received = 0;
    std::size_t lost = 0;
    std::size_t reconnects = 0;
    double seconds = 0;
    double throughput = 0; // commands per second
    LatencySummary latency;

    Json to_json() const;
};

/// Builds a fresh population on `target`, then drives it. Setup commands
/// are not timed. Throws TargetUnreachable.
LoadReport load_test(Target& target, const LoadOptions& options);

} // namespace cm::harness
