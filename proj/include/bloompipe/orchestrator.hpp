#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "bloompipe/blob_store.hpp"
#include "bloompipe/compute_pool.hpp"
#include "bloompipe/pipeline.hpp"
#include "bloompipe/time.hpp"

namespace bloompipe {

struct RunFilter {
    std::optional<std::string> pipeline;
    std::optional<RunStatus> status;
    std::optional<Timestamp> since;  // created_at >= since
    std::size_t offset = 0;
    std::size_t limit = 0;  // 0 = no limit
};

struct RunPage {
    std::vector<PipelineRun> runs;  // newest first
    std::size_t total = 0;          // matches before paging
};

/// Pipeline registry and run executor.
///
/// Runs are queued by start_run and executed by up to max_concurrent_runs
/// workers; activities inside a run execute strictly in order and the first
/// failure skips the rest. Process and Render work is dispatched onto the
/// compute pool. Every state change is appended to data_dir/runs.jsonl and
/// replayed on construction; runs that were still open are closed as
/// Failed("orphaned").
class Orchestrator final : public RunStarter {
public:
    struct Options {
        std::filesystem::path data_dir;
        std::size_t max_concurrent_runs = 8;
        Millis run_timeout{120'000};
        int render_quality = 90;
    };

    Orchestrator(Options options, ObjectStore& store, ComputePool& pool, const Clock& clock);
    ~Orchestrator() override;

    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    /// Upserts by name. Throws ValidationError.
    void apply_pipeline(const PipelineDefinition& def);
    std::vector<PipelineDefinition> pipelines() const;
    bool has_pipeline(const std::string& name) const override;

    /// Errors: UnknownPipeline, MissingParameter, OrchestratorUnavailable.
    std::string start_run(const std::string& pipeline, const ParameterMap& parameters,
                          const TriggerSource& trigger) override;

    /// Throws Error{NotFound}.
    PipelineRun get_run(const std::string& run_id) const;
    RunPage list_runs(const RunFilter& filter = {}) const;

    /// True if the run is terminal before the timeout.
    bool wait_for_run(const std::string& run_id, Millis timeout) const;
    /// True if nothing is queued or in progress before the timeout.
    bool wait_idle(Millis timeout) const;

    std::size_t in_progress() const;
    std::size_t peak_in_progress() const { return peak_in_progress_.load(); }

    void shutdown();

private:
    struct Slot {
        mutable std::mutex mutex;
        PipelineRun run;
        std::shared_ptr<const PipelineDefinition> definition;
        std::uint64_t sequence = 0;
    };

    void replay();
    void persist(const PipelineRun& run);
    void worker_loop();
    void execute(Slot& slot);
    std::shared_ptr<Slot> slot(const std::string& run_id) const;
    void update(Slot& slot, const std::function<void(PipelineRun&)>& change);

    Options options_;
    ObjectStore& store_;
    ComputePool& pool_;
    const Clock& clock_;

    mutable std::shared_mutex pipelines_mutex_;
    std::map<std::string, std::shared_ptr<const PipelineDefinition>> pipelines_;

    mutable std::shared_mutex runs_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> runs_;
    std::uint64_t next_sequence_ = 0;

    mutable std::mutex queue_mutex_;
    mutable std::condition_variable queue_cv_;
    mutable std::condition_variable done_cv_;
    std::deque<std::shared_ptr<Slot>> queue_;
    std::size_t active_ = 0;
    bool stopping_ = false;
    std::atomic<std::size_t> peak_in_progress_{0};

    std::mutex log_mutex_;
    std::ofstream run_log_;
    std::ofstream pipeline_log_;
    std::string instance_tag_;
    std::atomic<std::uint64_t> id_seq_{0};

    std::vector<std::thread> workers_;
};

}  // namespace bloompipe
