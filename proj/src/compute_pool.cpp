#include "bloompipe/compute_pool.hpp"

#include <algorithm>

#include "bloompipe/error.hpp"

namespace bloompipe {

using SteadyClock = std::chrono::steady_clock;

void PoolConfig::validate() const {
    if (min_workers < 1 || min_workers > max_workers) {
        throw Error(Errc::InvalidArgument, "pool requires 1 <= min_workers <= max_workers");
    }
    if (cold_start.count() < 0) throw Error(Errc::InvalidArgument, "cold_start must be >= 0");
    if (idle_timeout.count() <= 0) throw Error(Errc::InvalidArgument, "idle_timeout must be > 0");
    if (tasks_per_worker < 1) throw Error(Errc::InvalidArgument, "tasks_per_worker must be >= 1");
}

std::string_view to_string(PoolPhase phase) {
    switch (phase) {
        case PoolPhase::Terminated: return "Terminated";
        case PoolPhase::Starting: return "Starting";
        case PoolPhase::Ready: return "Ready";
    }
    return "Unknown";
}

int autoscale_target(const PoolState& state, const PoolConfig& config) {
    const int load = state.queued_tasks + state.running_tasks;
    const int wanted = (load + config.tasks_per_worker - 1) / config.tasks_per_worker;
    const int target = std::clamp(wanted, config.min_workers, config.max_workers);
    if (target < state.active_workers && state.queued_tasks > 0) return state.active_workers;
    return target;
}

void TaskHandle::wait() const {
    std::unique_lock lock(shared_->mutex);
    shared_->cv.wait(lock, [&] { return shared_->finished; });
    if (shared_->error) std::rethrow_exception(shared_->error);
}

bool TaskHandle::done() const {
    std::lock_guard lock(shared_->mutex);
    return shared_->finished;
}

TaskHandle::SteadyTime TaskHandle::submitted_at() const {
    std::lock_guard lock(shared_->mutex);
    return shared_->submitted;
}

TaskHandle::SteadyTime TaskHandle::started_at() const {
    std::lock_guard lock(shared_->mutex);
    return shared_->started;
}

TaskHandle::SteadyTime TaskHandle::finished_at() const {
    std::lock_guard lock(shared_->mutex);
    return shared_->finished_time;
}

std::chrono::microseconds TaskHandle::dispatch_latency() const {
    std::lock_guard lock(shared_->mutex);
    return std::chrono::duration_cast<std::chrono::microseconds>(shared_->started - shared_->submitted);
}

ComputePool::ComputePool(PoolConfig config, const Clock& clock)
    : ComputePool(config, clock, Options{}) {}

ComputePool::ComputePool(PoolConfig config, const Clock& clock, Options options)
    : config_(config), clock_(clock), options_(std::move(options)) {
    config_.validate();
    if (!options_.provisioner) {
        options_.provisioner = [](const PoolConfig& c) { std::this_thread::sleep_for(c.cold_start); };
    }
    state_.last_activity_at = clock_.now();
    const int slots = config_.max_workers * config_.tasks_per_worker;
    workers_.reserve(slots);
    for (int i = 0; i < slots; ++i) workers_.emplace_back([this] { worker_loop(); });
    if (options_.idle_reaper) reaper_ = std::thread([this] { reaper_loop(); });
}

ComputePool::~ComputePool() { shutdown(); }

void ComputePool::complete(TaskHandle::Shared& shared, std::exception_ptr error) {
    {
        std::lock_guard lock(shared.mutex);
        shared.finished = true;
        shared.error = std::move(error);
        shared.finished_time = SteadyClock::now();
    }
    shared.cv.notify_all();
}

TaskHandle ComputePool::submit(std::function<void()> task) {
    auto shared = std::make_shared<TaskHandle::Shared>();
    shared->submitted = SteadyClock::now();
    {
        std::lock_guard lock(mutex_);
        if (stopping_) {
            complete(*shared, std::make_exception_ptr(Error(Errc::TaskPanicked, "pool is shut down")));
            return TaskHandle(shared);
        }
        queue_.push_back(Item{std::move(task), shared});
        state_.queued_tasks = static_cast<int>(queue_.size());
        state_.last_activity_at = clock_.now();
        if (state_.phase == PoolPhase::Terminated) {
            begin_start_locked();
        } else if (state_.phase == PoolPhase::Ready) {
            rescale_locked();
        }
    }
    work_cv_.notify_all();
    return TaskHandle(shared);
}

void ComputePool::begin_start_locked() {
    state_.phase = PoolPhase::Starting;
    const auto generation = ++start_generation_;
    auto outcome = std::make_shared<std::pair<bool, std::exception_ptr>>(false, nullptr);
    auto outcome_mutex = std::make_shared<std::mutex>();
    auto outcome_cv = std::make_shared<std::condition_variable>();

    provisioners_.emplace_back([this, generation, outcome, outcome_mutex, outcome_cv] {
        // Runs the provisioner on its own thread so a hung start can be
        // abandoned once the deadline passes.
        std::thread work([&, outcome, outcome_mutex, outcome_cv] {
            std::exception_ptr error;
            try {
                options_.provisioner(config_);
            } catch (...) {
                error = std::current_exception();
            }
            {
                std::lock_guard lock(*outcome_mutex);
                outcome->first = true;
                outcome->second = error;
            }
            outcome_cv->notify_all();
        });

        const auto deadline = std::max(config_.cold_start * 10, Millis{1000});
        bool started = false;
        std::exception_ptr error;
        {
            std::unique_lock lock(*outcome_mutex);
            started = outcome_cv->wait_for(lock, deadline, [&] { return outcome->first; });
            if (started) error = outcome->second;
        }

        std::deque<Item> failed;
        {
            std::lock_guard lock(mutex_);
            if (generation == start_generation_ && state_.phase == PoolPhase::Starting) {
                if (started && !error) {
                    state_.phase = PoolPhase::Ready;
                    state_.active_workers = config_.min_workers;
                    state_.last_activity_at = clock_.now();
                    rescale_locked();
                } else {
                    state_.phase = PoolPhase::Terminated;
                    state_.active_workers = 0;
                    failed.swap(queue_);
                    state_.queued_tasks = 0;
                }
            }
        }
        work_cv_.notify_all();
        state_cv_.notify_all();
        for (auto& item : failed) {
            complete(*item.shared,
                     std::make_exception_ptr(Error(Errc::PoolStartTimeout,
                                                   started ? "pool provisioning failed"
                                                           : "pool did not start within deadline")));
        }
        work.join();
    });
}

void ComputePool::rescale_locked() {
    if (state_.phase != PoolPhase::Ready) return;
    state_.queued_tasks = static_cast<int>(queue_.size());
    state_.active_workers = autoscale_target(state_, config_);
}

int ComputePool::autoscale_step() {
    std::lock_guard lock(mutex_);
    rescale_locked();
    work_cv_.notify_all();
    return state_.active_workers;
}

void ComputePool::worker_loop() {
    for (;;) {
        Item item;
        {
            std::unique_lock lock(mutex_);
            work_cv_.wait(lock, [&] {
                return stopping_ ||
                       (state_.phase == PoolPhase::Ready && !queue_.empty() &&
                        state_.running_tasks < state_.active_workers * config_.tasks_per_worker);
            });
            if (stopping_) return;
            item = std::move(queue_.front());
            queue_.pop_front();
            state_.queued_tasks = static_cast<int>(queue_.size());
            ++state_.running_tasks;
        }
        {
            std::lock_guard lock(item.shared->mutex);
            item.shared->started = SteadyClock::now();
        }
        std::exception_ptr error;
        try {
            item.task();
        } catch (const std::exception& e) {
            error = std::make_exception_ptr(Error(Errc::TaskPanicked, e.what()));
        } catch (...) {
            error = std::make_exception_ptr(Error(Errc::TaskPanicked, "task panicked"));
        }
        {
            std::lock_guard lock(mutex_);
            --state_.running_tasks;
            state_.last_activity_at = clock_.now();
            rescale_locked();
        }
        complete(*item.shared, error);
        work_cv_.notify_all();
        state_cv_.notify_all();
    }
}

void ComputePool::reaper_loop() {
    std::unique_lock lock(mutex_);
    while (!stopping_) {
        state_cv_.wait_for(lock, options_.reaper_interval);
        if (stopping_) break;
        lock.unlock();
        tick_idle(clock_.now());
        lock.lock();
    }
}

bool ComputePool::tick_idle(Timestamp now) {
    std::lock_guard lock(mutex_);
    if (state_.phase != PoolPhase::Ready || state_.running_tasks != 0 || !queue_.empty()) return false;
    if (now - state_.last_activity_at < config_.idle_timeout) return false;
    state_.phase = PoolPhase::Terminated;
    state_.active_workers = 0;
    state_cv_.notify_all();
    return true;
}

PoolState ComputePool::state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

void ComputePool::warm_up() {
    std::unique_lock lock(mutex_);
    if (state_.phase == PoolPhase::Terminated) begin_start_locked();
    state_cv_.wait(lock, [&] { return stopping_ || state_.phase != PoolPhase::Starting; });
    if (state_.phase != PoolPhase::Ready) throw Error(Errc::PoolStartTimeout, "pool failed to start");
}

void ComputePool::shutdown() {
    std::deque<Item> orphaned;
    {
        std::lock_guard lock(mutex_);
        if (stopping_ && workers_.empty()) return;
        stopping_ = true;
        orphaned.swap(queue_);
        state_.queued_tasks = 0;
    }
    work_cv_.notify_all();
    state_cv_.notify_all();
    for (auto& item : orphaned) {
        complete(*item.shared, std::make_exception_ptr(Error(Errc::TaskPanicked, "pool shut down")));
    }
    for (auto& t : workers_)
        if (t.joinable()) t.join();
    workers_.clear();
    if (reaper_.joinable()) reaper_.join();
    std::vector<std::thread> provisioners;
    {
        std::lock_guard lock(mutex_);
        provisioners.swap(provisioners_);
    }
    for (auto& t : provisioners)
        if (t.joinable()) t.join();
}

}  // namespace bloompipe
