#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "bloompipe/blob_store.hpp"
#include "bloompipe/compute_pool.hpp"
#include "bloompipe/event_bus.hpp"
#include "bloompipe/http_server.hpp"
#include "bloompipe/orchestrator.hpp"
#include "bloompipe/time.hpp"
#include "bloompipe/trigger_engine.hpp"

namespace bloompipe {

/// Counters kept by the store server in test mode.
struct StoreStats {
    std::uint64_t puts = 0;
    int in_flight = 0;
    int max_in_flight = 0;
    Millis latency{0};
};

/// REST front of a BlobStore.
///
///   POST   /v1/containers                      {"name": ...}
///   GET    /v1/containers
///   PUT    /v1/containers/{c}/blobs/{path}     raw body
///   GET    /v1/containers/{c}/blobs/{path}
///   DELETE /v1/containers/{c}/blobs/{path}
///   GET    /v1/containers/{c}/blobs?prefix=p
///
/// With test_mode on, every PUT sleeps for the injected latency and the
/// server tracks concurrent PUTs:
///
///   GET  /v1/admin/stats
///   POST /v1/admin/stats/reset
///   POST /v1/admin/latency                     {"ms": 20}
class StoreServer {
public:
    struct Options {
        bool test_mode = false;
        int threads = 128;
    };

    StoreServer(BlobStore& store, Options options);
    ~StoreServer();

    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    int port() const { return http_.port(); }

    void set_latency(Millis latency) { latency_ms_ = latency.count(); }
    StoreStats stats() const;
    void reset_stats();

private:
    BlobStore& store_;
    Options options_;
    HttpServer http_;
    std::atomic<std::int64_t> latency_ms_{0};
    std::atomic<std::uint64_t> puts_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

/// REST front of the orchestrator, trigger engine, bus and pool.
///
///   POST /v1/pipelines                 GET /v1/pipelines
///   POST /v1/pipelines/{name}/runs     {"parameters": {...}} -> 202
///   GET  /v1/runs/{id}                 GET /v1/runs?pipeline=&status=&since=&offset=&limit=
///   POST /v1/triggers                  GET /v1/triggers
///   POST /v1/triggers/{name}/enable    POST /v1/triggers/{name}/disable
///   GET  /v1/dead-letters              GET /v1/pool
///   POST /v1/clock/advance             {"ms": n}  (simulated clock only)
class OrchestratorServer {
public:
    OrchestratorServer(Orchestrator& orchestrator, TriggerEngine& triggers, EventBus& bus,
                       ComputePool& pool, ManualClock* manual_clock, int threads = 32);
    ~OrchestratorServer();

    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    int port() const { return http_.port(); }

private:
    HttpServer http_;
};

struct PlatformConfig {
    std::filesystem::path store_root;
    std::filesystem::path data_dir;
    PoolConfig pool;
    bool fake_clock = false;
    bool store_test_mode = false;
    std::string store_address = "127.0.0.1:0";
    std::string orch_address = "127.0.0.1:0";
    std::size_t max_concurrent_runs = 8;
    Millis run_timeout{120'000};
    Millis trigger_poll{1000};
    EventBus::Options bus;
};

/// Everything the pipeline server runs, wired together: the store publishes
/// into the bus, event triggers subscribe to it, and runs execute against
/// the store and the pool.
class Platform {
public:
    explicit Platform(PlatformConfig config);
    ~Platform();

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    /// Binds both servers and starts the schedule timer (real clock only).
    void start();
    void stop();

    std::string store_url() const;
    std::string orch_url() const;

    BlobStore& store() { return store_; }
    EventBus& bus() { return bus_; }
    ComputePool& pool() { return pool_; }
    Orchestrator& orchestrator() { return orchestrator_; }
    TriggerEngine& triggers() { return triggers_; }
    StoreServer& store_server() { return store_server_; }
    /// Null unless running on the simulated clock.
    ManualClock* manual_clock() { return manual_; }
    const Clock& clock() const { return *clock_; }

private:
    static std::unique_ptr<Clock> make_clock(const PlatformConfig& config);

    PlatformConfig config_;
    std::unique_ptr<Clock> clock_;
    ManualClock* manual_ = nullptr;
    EventBus bus_;
    BlobStore store_;
    ComputePool pool_;
    Orchestrator orchestrator_;
    TriggerEngine triggers_;
    StoreServer store_server_;
    OrchestratorServer orch_server_;
    bool started_ = false;
};

}  // namespace bloompipe
