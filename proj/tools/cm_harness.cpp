#include "cm/error.hpp"
#include "cm/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace cm;
using namespace cm::harness;

namespace {

std::unique_ptr<Target> make_target(const std::string& url) {
    if (url.empty()) return std::make_unique<InProcessTarget>();
    return std::make_unique<HttpTarget>(url);
}

void write_out(const std::string& path, const Json& j) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::StorageFailure, "cannot write " + path);
    out << j.dump(2) << '\n';
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto v = std::stoul(item);
        if (v < 2) fail(ErrorCode::InvalidRequest, "sweep sizes must be at least 2");
        out.push_back(v);
    }
    return out;
}

void print_load(const LoadReport& r) {
    std::cout << "participants " << r.participants << " (" << r.experts << " experts, " << r.patients
              << " patients)\n"
              << "notifications " << r.notifications << ", commands " << r.commands << ", errors "
              << r.command_errors << '\n'
              << "throughput " << r.throughput << " cmd/s over " << r.seconds << " s\n"
              << "latency ms p50 " << r.latency.p50 << " p95 " << r.latency.p95 << " p99 " << r.latency.p99
              << " max " << r.latency.max << " (" << r.latency.samples << " samples)\n"
              << "deliveries " << r.deliveries_received << "/" << r.deliveries_enqueued << ", lost " << r.lost
              << ", reconnects " << r.reconnects << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scenario runner, approval oracle and load generator"};
    app.require_subcommand(1);
    std::string out;
    app.add_option("--out", out, "write a JSON results file");

    auto* scenario = app.add_subcommand("scenario", "scripted scenarios");
    scenario->require_subcommand(1);
    auto* run = scenario->add_subcommand("run", "run a scenario file");
    std::string file, target_url;
    bool write_golden_file = false;
    run->add_option("file", file)->required()->check(CLI::ExistingFile);
    run->add_option("--target", target_url, "server base url; in-process when omitted");
    run->add_flag("--write-golden", write_golden_file, "overwrite the scenario's golden file with this run");
    auto* tokens = scenario->add_subcommand("tokens", "write a token table for a server");
    std::string token_file;
    std::size_t token_count = 0;
    tokens->add_option("file", token_file)->required();
    tokens->add_option("--participants", token_count, "tokens for p1..pN")->required();

    auto* oracle = app.add_subcommand("oracle", "exhaustive approval check");
    int k = 4;
    oracle->add_option("--k", k, "largest approver count")->check(CLI::Range(1, 4));

    auto* load = app.add_subcommand("load", "latency and throughput run");
    LoadOptions lo;
    std::string mix = "t1=1";
    std::string sweep;
    load->add_option("--experts", lo.experts)->check(CLI::PositiveNumber);
    load->add_option("--patients", lo.patients)->check(CLI::PositiveNumber);
    load->add_option("--count", lo.count)->check(CLI::PositiveNumber);
    load->add_option("--mix", mix, "e.g. t1=0.5,t2=0.5");
    load->add_option("--senders", lo.senders, "concurrent sending clients")->check(CLI::PositiveNumber);
    load->add_option("--seed", lo.seed);
    load->add_option("--target", target_url, "server base url; in-process when omitted");
    load->add_option("--sweep", sweep, "participant totals, e.g. 50,500; population and count scale together");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            const auto s = load_scenario(file);
            auto target = make_target(target_url);
            auto report = run_scenario(s, *target);
            std::cout << report.text();
            if (write_golden_file) {
                if (!s.golden) fail(ErrorCode::InvalidRequest, "scenario names no golden file");
                write_golden(*s.golden, report.digest_lines);
                std::cout << "wrote " << s.golden->string() << '\n';
            }
            write_out(out, report.to_json());
            return report.passed() || write_golden_file ? 0 : 1;
        }
        if (*tokens) {
            std::ofstream f(token_file, std::ios::trunc);
            if (!f) fail(ErrorCode::StorageFailure, "cannot write " + token_file);
            f << token_table(token_count).dump(2) << '\n';
            return 0;
        }
        if (*oracle) {
            auto r = oracle_check(k);
            for (const auto& [n, cases] : r.cases_per_k) std::cout << "k=" << n << "  " << cases << " cases\n";
            std::cout << "total " << r.total << " cases, " << r.mismatches.size() << " mismatches, " << r.seconds
                      << " s\n";
            for (const auto& m : r.mismatches) std::cout << "  " << m << '\n';
            write_out(out, r.to_json());
            return r.passed() ? 0 : 1;
        }
        if (*load) {
            lo.mix = parse_mix(mix);
            Json buckets = Json::array();
            bool lossless = true;
            std::vector<LoadReport> reports;
            if (sweep.empty()) {
                auto target = make_target(target_url);
                reports.push_back(load_test(*target, lo));
            } else {
                const double total = static_cast<double>(lo.experts + lo.patients);
                for (auto size : parse_sizes(sweep)) {
                    LoadOptions scaled = lo;
                    const double f = static_cast<double>(size) / total;
                    scaled.experts = std::max<std::size_t>(2, static_cast<std::size_t>(lo.experts * f + 0.5));
                    scaled.patients = std::max<std::size_t>(1, size - std::min(size - 1, scaled.experts));
                    scaled.count = std::max<std::size_t>(1, static_cast<std::size_t>(lo.count * f + 0.5));
                    auto target = make_target(target_url);
                    reports.push_back(load_test(*target, scaled));
                }
            }
            for (const auto& r : reports) {
                print_load(r);
                buckets.push_back(r.to_json());
                lossless = lossless && r.lost == 0;
            }
            Json result{{"buckets", buckets}};
            if (reports.size() > 1 && reports.front().latency.p95 > 0) {
                const double growth = reports.back().latency.p95 / reports.front().latency.p95;
                result["p95_growth"] = growth;
                std::cout << "p95 growth " << growth << "x\n";
            }
            write_out(out, result);
            return lossless ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return e.code() == ErrorCode::ExpectationFailed ? 1 : 2;
    }
    return 2;
}
