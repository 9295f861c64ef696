#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

#include "bloompipe/time.hpp"

namespace bloompipe {

struct PoolConfig {
    int min_workers = 2;
    int max_workers = 8;
    Millis cold_start{3000};
    Millis idle_timeout{60000};
    int tasks_per_worker = 4;

    /// Throws Error{InvalidArgument} when the invariants do not hold.
    void validate() const;
};

enum class PoolPhase { Terminated, Starting, Ready };

std::string_view to_string(PoolPhase phase);

struct PoolState {
    PoolPhase phase = PoolPhase::Terminated;
    int active_workers = 0;
    int queued_tasks = 0;
    int running_tasks = 0;
    Timestamp last_activity_at{};
};

/// clamp(ceil((queued + running) / tasks_per_worker), min, max), never
/// shrinking below the current count while work is still queued.
int autoscale_target(const PoolState& state, const PoolConfig& config);

/// Completion handle for a submitted task.
class TaskHandle {
public:
    using SteadyTime = std::chrono::steady_clock::time_point;

    TaskHandle() = default;

    /// Blocks until the task finished. Rethrows Error{TaskPanicked} or
    /// Error{PoolStartTimeout}.
    void wait() const;
    bool done() const;

    SteadyTime submitted_at() const;
    SteadyTime started_at() const;
    SteadyTime finished_at() const;
    /// Time between submission and a worker picking the task up.
    std::chrono::microseconds dispatch_latency() const;

private:
    friend class ComputePool;

    struct Shared {
        mutable std::mutex mutex;
        std::condition_variable cv;
        bool finished = false;
        std::exception_ptr error;
        SteadyTime submitted{};
        SteadyTime started{};
        SteadyTime finished_time{};
    };

    explicit TaskHandle(std::shared_ptr<Shared> shared) : shared_(std::move(shared)) {}

    std::shared_ptr<Shared> shared_;
};

/// Simulated processing cluster.
///
/// A terminated pool cold-starts on the first submission (the provisioner
/// sleeps for cold_start by default). Once ready, capacity is
/// active_workers * tasks_per_worker concurrent tasks; the worker count
/// follows autoscale_target after every submission and completion. The pool
/// terminates on the first idle tick at or after last activity + idle_timeout.
class ComputePool {
public:
    /// Brings workers up; returning means provisioning succeeded.
    using Provisioner = std::function<void(const PoolConfig&)>;

    struct Options {
        Provisioner provisioner;  // defaults to sleeping cold_start
        bool idle_reaper = true;
        Millis reaper_interval{100};
    };

    ComputePool(PoolConfig config, const Clock& clock);
    ComputePool(PoolConfig config, const Clock& clock, Options options);
    ~ComputePool();

    ComputePool(const ComputePool&) = delete;
    ComputePool& operator=(const ComputePool&) = delete;

    TaskHandle submit(std::function<void()> task);

    PoolState state() const;
    const PoolConfig& config() const { return config_; }

    /// Applies autoscale_target to the live state; returns the new count.
    int autoscale_step();

    /// Returns true if this tick terminated the pool.
    bool tick_idle(Timestamp now);

    /// Blocks until the pool is Ready (starting it if needed).
    void warm_up();

    void shutdown();

private:
    struct Item {
        std::function<void()> task;
        std::shared_ptr<TaskHandle::Shared> shared;
    };

    void worker_loop();
    void reaper_loop();
    void begin_start_locked();
    void rescale_locked();
    static void complete(TaskHandle::Shared& shared, std::exception_ptr error);

    PoolConfig config_;
    const Clock& clock_;
    Options options_;

    mutable std::mutex mutex_;
    std::condition_variable work_cv_;
    std::condition_variable state_cv_;
    PoolState state_;
    std::deque<Item> queue_;
    std::uint64_t start_generation_ = 0;
    bool stopping_ = false;

    std::vector<std::thread> workers_;
    std::vector<std::thread> provisioners_;
    std::thread reaper_;
};

}  // namespace bloompipe
