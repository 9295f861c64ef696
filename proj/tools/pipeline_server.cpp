// pipeline_server: blob store, event bus, triggers, orchestrator and pool in one process.

#include <yaml-cpp/yaml.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "bloompipe/error.hpp"
#include "bloompipe/services.hpp"

using namespace bloompipe;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

bool env_flag(const char* name) {
    const auto v = env_or(name, "");
    return v == "1" || v == "true" || v == "yes";
}

void apply_config(const std::string& file, PlatformConfig& config) {
    const auto root = YAML::LoadFile(file);
    if (const auto pool = root["pool"]) {
        auto& p = config.pool;
        if (pool["min_workers"]) p.min_workers = pool["min_workers"].as<int>();
        if (pool["max_workers"]) p.max_workers = pool["max_workers"].as<int>();
        if (pool["tasks_per_worker"]) p.tasks_per_worker = pool["tasks_per_worker"].as<int>();
        if (pool["cold_start_ms"]) p.cold_start = Millis{pool["cold_start_ms"].as<std::int64_t>()};
        if (pool["idle_timeout_ms"]) p.idle_timeout = Millis{pool["idle_timeout_ms"].as<std::int64_t>()};
    }
    if (const auto orch = root["orchestrator"]) {
        if (orch["max_concurrent_runs"]) config.max_concurrent_runs = orch["max_concurrent_runs"].as<std::size_t>();
        if (orch["run_timeout_ms"]) config.run_timeout = Millis{orch["run_timeout_ms"].as<std::int64_t>()};
    }
    if (const auto bus = root["event_bus"]) {
        if (bus["queue_depth"]) config.bus.queue_depth = bus["queue_depth"].as<std::size_t>();
        if (bus["retry_backoff_ms"]) config.bus.retry_backoff = Millis{bus["retry_backoff_ms"].as<std::int64_t>()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pipeline_server: store + orchestrator services"};
    PlatformConfig config;
    std::string config_file;
    config.store_root = env_or("STORE_ROOT", "./data/store");
    config.data_dir = env_or("PIPE_DATA_DIR", "./data/orchestrator");
    config.store_address = env_or("STORE_ADDR", "127.0.0.1:8081");
    config.orch_address = env_or("ORCH_ADDR", "127.0.0.1:8082");
    config.fake_clock = env_flag("PIPE_FAKE_CLOCK");
    config.store_test_mode = env_flag("STORE_TEST_MODE");
    std::vector<std::string> containers;
    app.add_option("--config", config_file, "YAML service config (pool:, orchestrator:, event_bus:)")
        ->check(CLI::ExistingFile);
    app.add_option("--store-root", config.store_root, "Store root directory (STORE_ROOT)");
    app.add_option("--data-dir", config.data_dir, "Run history directory (PIPE_DATA_DIR)");
    app.add_option("--store-addr", config.store_address, "Store listen address (STORE_ADDR)");
    app.add_option("--orch-addr", config.orch_address, "Orchestrator listen address (ORCH_ADDR)");
    app.add_flag("--fake-clock", config.fake_clock, "Simulated clock (PIPE_FAKE_CLOCK=1)");
    app.add_flag("--test-mode", config.store_test_mode, "Store latency injection and stats (STORE_TEST_MODE=1)");
    app.add_option("--container", containers, "Create this container at startup if missing (repeatable)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (!config_file.empty()) apply_config(config_file, config);
        config.pool.validate();
        Platform platform(config);
        for (const auto& c : containers) {
            if (!platform.store().has_container(c)) platform.store().create_container(c);
        }
        platform.start();
        std::printf("store        %s\norchestrator %s%s\n", platform.store_url().c_str(), platform.orch_url().c_str(),
                    config.fake_clock ? "  (simulated clock)" : "");
        std::fflush(stdout);

        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        platform.stop();
    } catch (const YAML::Exception& e) {
        std::cerr << "pipeline_server: config: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "pipeline_server: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
