#include "cm/api.hpp"
#include "cm/error.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Care-team coordination server"};
    std::optional<std::string> config_file, bind, log_path, token_file;
    std::optional<double> heartbeat;
    std::optional<std::size_t> threads;
    bool no_fsync = false;
    app.add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--bind", bind, "host:port");
    app.add_option("--log", log_path, "event log path");
    app.add_option("--tokens", token_file, "token table (JSON object token -> principal)");
    app.add_option("--heartbeat", heartbeat, "stream heartbeat seconds")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "HTTP worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--no-fsync", no_fsync, "skip fsync after appends");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    cm::api::Config cfg;
    try {
        auto env = cm::api::environment();
        if (bind) env["CM_BIND"] = *bind;
        if (log_path) env["CM_LOG_PATH"] = *log_path;
        if (token_file) env["CM_TOKEN_FILE"] = *token_file;
        if (heartbeat) env["CM_HEARTBEAT_SECONDS"] = std::to_string(*heartbeat);
        if (threads) env["CM_THREADS"] = std::to_string(*threads);
        if (no_fsync) env["CM_FSYNC"] = "0";
        std::optional<std::filesystem::path> file;
        if (config_file) file = *config_file;
        cfg = cm::api::load_config(file, env);
    } catch (const cm::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }

    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
    std::signal(SIGPIPE, SIG_IGN);

    return cm::api::serve(cfg, g_stop, std::cerr);
}
