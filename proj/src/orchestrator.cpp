#include "bloompipe/orchestrator.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <sstream>

#include "bloompipe/detection.hpp"
#include "bloompipe/error.hpp"
#include "bloompipe/expression.hpp"
#include "bloompipe/imaging.hpp"
#include "httplib.h"

namespace bloompipe {

namespace fs = std::filesystem;
using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

namespace {

/// Failure of one activity attempt, already phrased for the run record.
struct ActivityFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Artifact {
    std::string container;
    std::string path;
    Bytes bytes;
    std::string content_type;
};

struct RunContext {
    ExprContext expressions;
    std::optional<Artifact> current;
    std::map<std::string, DetectionResult> detections;
    SteadyClock::time_point deadline;
};

std::string eval(const std::string& source, const RunContext& ctx) {
    return Expression::parse(source).evaluate(ctx.expressions);
}

std::string sidecar_path(const std::string& path) {
    const auto slash = path.rfind('/');
    const auto dot = path.rfind('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ".json";
    return path.substr(0, dot) + ".json";
}

std::string strip_path(const std::string& path, int index) {
    const auto slash = path.rfind('/');
    const auto dot = path.rfind('.');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    const auto stem = has_ext ? path.substr(0, dot) : path;
    return stem + "_" + std::to_string(index) + ".jpg";
}

struct Endpoint {
    std::string base;  // scheme://host:port
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Runs `work` on the pool, translating pool failures into activity errors.
void on_pool(ComputePool& pool, const std::string& error_kind, const std::function<void()>& work) {
    try {
        pool.submit(work).wait();
    } catch (const Error& e) {
        if (e.code() == Errc::PoolStartTimeout) throw ActivityFailure(std::string("PoolStartTimeout: ") + e.what());
        throw ActivityFailure(error_kind + ": " + e.what());
    }
}

}  // namespace

Orchestrator::Orchestrator(Options options, ObjectStore& store, ComputePool& pool, const Clock& clock)
    : options_(std::move(options)), store_(store), pool_(pool), clock_(clock) {
    if (options_.max_concurrent_runs < 1) options_.max_concurrent_runs = 1;
    std::error_code ec;
    fs::create_directories(options_.data_dir, ec);
    if (ec) throw Error(Errc::StorageFailure, "cannot create data dir " + options_.data_dir.string());

    std::random_device rd;
    std::ostringstream tag;
    tag << std::hex << rd();
    instance_tag_ = tag.str();

    replay();
    run_log_.open(options_.data_dir / "runs.jsonl", std::ios::app);
    pipeline_log_.open(options_.data_dir / "pipelines.jsonl", std::ios::app);
    if (!run_log_ || !pipeline_log_) throw Error(Errc::StorageFailure, "cannot open run history");

    // Anything replayed as open never finished: close it out.
    std::vector<std::shared_ptr<Slot>> orphans;
    {
        std::shared_lock lock(runs_mutex_);
        for (const auto& [_, s] : runs_)
            if (!s->run.terminal()) orphans.push_back(s);
    }
    const auto now = clock_.now();
    for (auto& s : orphans) {
        update(*s, [&](PipelineRun& run) {
            for (auto& a : run.activities) {
                if (a.status == ActivityStatus::InProgress) {
                    a.status = ActivityStatus::Failed;
                    a.ended_at = now;
                    a.error = "orphaned";
                }
            }
            run.status = RunStatus::Failed;
            run.error = "orphaned";
            run.ended_at = now;
        });
    }

    for (std::size_t i = 0; i < options_.max_concurrent_runs; ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

Orchestrator::~Orchestrator() { shutdown(); }

void Orchestrator::replay() {
    {
        std::ifstream in(options_.data_dir / "pipelines.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                auto def = pipeline_from_json(json::parse(line));
                auto name = def.name;
                pipelines_[name] = std::make_shared<const PipelineDefinition>(std::move(def));
            } catch (const std::exception&) {
                // torn tail
            }
        }
    }
    std::ifstream in(options_.data_dir / "runs.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        PipelineRun run;
        try {
            run = run_from_json(json::parse(line));
        } catch (const std::exception&) {
            continue;
        }
        auto& s = runs_[run.run_id];
        if (!s) {
            s = std::make_shared<Slot>();
            s->sequence = ++next_sequence_;
        }
        s->run = std::move(run);
    }
}

void Orchestrator::persist(const PipelineRun& run) {
    const auto line = to_json(run).dump();
    std::lock_guard lock(log_mutex_);
    run_log_ << line << '\n' << std::flush;
}

void Orchestrator::update(Slot& s, const std::function<void(PipelineRun&)>& change) {
    PipelineRun snapshot;
    {
        std::lock_guard lock(s.mutex);
        change(s.run);
        snapshot = s.run;
    }
    persist(snapshot);
    if (snapshot.terminal()) {
        std::lock_guard lock(queue_mutex_);
        done_cv_.notify_all();
    }
}

void Orchestrator::apply_pipeline(const PipelineDefinition& def) {
    auto problems = validate(def);
    if (!problems.empty()) throw ValidationError(std::move(problems));
    auto stored = std::make_shared<const PipelineDefinition>(def);
    {
        std::lock_guard lock(log_mutex_);
        pipeline_log_ << to_json(def).dump() << '\n' << std::flush;
    }
    std::unique_lock lock(pipelines_mutex_);
    pipelines_[def.name] = std::move(stored);
}

std::vector<PipelineDefinition> Orchestrator::pipelines() const {
    std::shared_lock lock(pipelines_mutex_);
    std::vector<PipelineDefinition> out;
    for (const auto& [_, def] : pipelines_) out.push_back(*def);
    return out;
}

bool Orchestrator::has_pipeline(const std::string& name) const {
    std::shared_lock lock(pipelines_mutex_);
    return pipelines_.count(name) > 0;
}

std::string Orchestrator::start_run(const std::string& pipeline, const ParameterMap& parameters,
                                    const TriggerSource& trigger) {
    std::shared_ptr<const PipelineDefinition> def;
    {
        std::shared_lock lock(pipelines_mutex_);
        auto it = pipelines_.find(pipeline);
        if (it == pipelines_.end()) throw Error(Errc::UnknownPipeline, "unknown pipeline: " + pipeline);
        def = it->second;
    }
    ParameterMap resolved;
    for (const auto& p : def->parameters) {
        auto it = parameters.find(p.name);
        if (it != parameters.end()) {
            resolved[p.name] = it->second;
        } else if (p.default_value) {
            resolved[p.name] = *p.default_value;
        } else {
            throw Error(Errc::MissingParameter, "missing parameter '" + p.name + "' for " + pipeline);
        }
    }

    auto s = std::make_shared<Slot>();
    s->definition = def;
    s->run.run_id = "run-" + instance_tag_ + "-" + std::to_string(++id_seq_);
    s->run.pipeline = pipeline;
    s->run.trigger = trigger;
    s->run.parameters = std::move(resolved);
    s->run.status = RunStatus::Queued;
    s->run.created_at = clock_.now();
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) throw Error(Errc::OrchestratorUnavailable, "orchestrator is shutting down");
    }
    {
        std::unique_lock lock(runs_mutex_);
        s->sequence = ++next_sequence_;
        runs_[s->run.run_id] = s;
    }
    persist(s->run);
    {
        std::lock_guard lock(queue_mutex_);
        queue_.push_back(s);
    }
    queue_cv_.notify_one();
    return s->run.run_id;
}

std::shared_ptr<Orchestrator::Slot> Orchestrator::slot(const std::string& run_id) const {
    std::shared_lock lock(runs_mutex_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(Errc::NotFound, "unknown run: " + run_id);
    return it->second;
}

PipelineRun Orchestrator::get_run(const std::string& run_id) const {
    auto s = slot(run_id);
    std::lock_guard lock(s->mutex);
    return s->run;
}

RunPage Orchestrator::list_runs(const RunFilter& filter) const {
    std::vector<std::pair<std::uint64_t, PipelineRun>> matched;
    {
        std::shared_lock lock(runs_mutex_);
        for (const auto& [_, s] : runs_) {
            std::lock_guard slot_lock(s->mutex);
            const auto& run = s->run;
            if (filter.pipeline && run.pipeline != *filter.pipeline) continue;
            if (filter.status && run.status != *filter.status) continue;
            if (filter.since && run.created_at < *filter.since) continue;
            matched.emplace_back(s->sequence, run);
        }
    }
    std::sort(matched.begin(), matched.end(), [](const auto& a, const auto& b) {
        if (a.second.created_at != b.second.created_at) return a.second.created_at > b.second.created_at;
        return a.first > b.first;
    });
    RunPage page;
    page.total = matched.size();
    const auto end = filter.limit == 0 ? matched.size() : std::min(matched.size(), filter.offset + filter.limit);
    for (std::size_t i = filter.offset; i < end; ++i) page.runs.push_back(std::move(matched[i].second));
    return page;
}

bool Orchestrator::wait_for_run(const std::string& run_id, Millis timeout) const {
    auto s = slot(run_id);
    std::unique_lock lock(queue_mutex_);
    return done_cv_.wait_for(lock, timeout, [&] {
        std::lock_guard slot_lock(s->mutex);
        return s->run.terminal();
    });
}

bool Orchestrator::wait_idle(Millis timeout) const {
    std::unique_lock lock(queue_mutex_);
    return done_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && active_ == 0; });
}

std::size_t Orchestrator::in_progress() const {
    std::lock_guard lock(queue_mutex_);
    return active_;
}

void Orchestrator::worker_loop() {
    for (;;) {
        std::shared_ptr<Slot> s;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            s = std::move(queue_.front());
            queue_.pop_front();
            ++active_;
            auto peak = peak_in_progress_.load();
            while (active_ > peak && !peak_in_progress_.compare_exchange_weak(peak, active_)) {
            }
        }
        execute(*s);
        {
            std::lock_guard lock(queue_mutex_);
            --active_;
        }
        done_cv_.notify_all();
    }
}

void Orchestrator::execute(Slot& s) {
    const auto& def = *s.definition;
    RunContext ctx;
    ctx.deadline = SteadyClock::now() + options_.run_timeout;
    {
        std::lock_guard lock(s.mutex);
        for (const auto& [k, v] : s.run.parameters) ctx.expressions["param." + k] = v;
    }
    update(s, [&](PipelineRun& run) {
        run.status = RunStatus::InProgress;
        run.started_at = std::max(clock_.now(), run.created_at);
    });

    auto copy = [&](const CopyConfig& cfg) {
        const auto src_container = eval(cfg.source.container_expr, ctx);
        const auto src_path = eval(cfg.source.path_expr, ctx);
        Blob blob;
        try {
            blob = store_.get_blob(src_container, src_path);
        } catch (const std::exception& e) {
            throw ActivityFailure("CopyError: " + std::string(e.what()));
        }
        const auto dst_container = eval(cfg.sink.container_expr, ctx);
        const auto dst_path = eval(cfg.sink.path_expr, ctx);
        try {
            store_.put_blob(dst_container, dst_path, blob.bytes, blob.info.content_type);
        } catch (const std::exception& e) {
            throw ActivityFailure("CopyError: " + std::string(e.what()));
        }
        ctx.current = Artifact{dst_container, dst_path, std::move(blob.bytes), blob.info.content_type};
    };

    auto require_input = [&](const char* kind) -> Artifact& {
        if (!ctx.current) throw ActivityFailure(std::string(kind) + ": no input artifact (add a Copy first)");
        return *ctx.current;
    };

    auto process = [&](const ProcessConfig& cfg) {
        auto& input = require_input("ProcessError");
        std::vector<std::pair<std::string, Bytes>> strips;
        std::string failure;
        on_pool(pool_, "ProcessError", [&] {
            switch (cfg.op) {
                case ProcessOp::Compress:
                    input.bytes = compress_jpeg(input.bytes, cfg.quality);
                    input.content_type = "image/jpeg";
                    break;
                case ProcessOp::ValidateDims: {
                    const auto check = validate_dims(decode_image(input.bytes), cfg.width, cfg.height);
                    if (!check.ok) {
                        failure = "ProcessError: expected " + std::to_string(cfg.width) + "x" +
                                  std::to_string(cfg.height) + ", got " + std::to_string(check.actual_width) +
                                  "x" + std::to_string(check.actual_height);
                    }
                    break;
                }
                case ProcessOp::Slice: {
                    const auto parts = slice_vertical(decode_image(input.bytes), cfg.slices);
                    const auto base = eval(cfg.sink->path_expr, ctx);
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                        strips.emplace_back(strip_path(base, static_cast<int>(i)), encode_jpeg(parts[i], 90));
                    }
                    break;
                }
            }
        });
        if (!failure.empty()) throw ActivityFailure(failure);
        if (!strips.empty()) {
            const auto container = eval(cfg.sink->container_expr, ctx);
            try {
                for (auto& [path, bytes] : strips) store_.put_blob(container, path, std::move(bytes), "image/jpeg");
            } catch (const std::exception& e) {
                throw ActivityFailure("ProcessError: " + std::string(e.what()));
            }
        }
    };

    auto infer = [&](const std::string& name, const InferConfig& cfg) {
        auto& input = require_input("InferError");
        const char* key = std::getenv(cfg.auth_key_ref.c_str());
        const auto hint = cfg.filename_expr ? eval(*cfg.filename_expr, ctx) : input.path;
        const auto endpoint = split_endpoint(cfg.endpoint);
        httplib::Client client(endpoint.base);
        const auto remaining = std::chrono::duration_cast<Millis>(ctx.deadline - SteadyClock::now());
        const auto timeout = std::max(Millis{1}, std::min(Millis{cfg.timeout_ms}, remaining));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_tcp_nodelay(true);
        client.set_write_timeout(timeout);
        httplib::Headers headers{{"X-Filename", hint}};
        if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
        auto res = client.Post(endpoint.path, headers, input.bytes,
                               input.content_type.empty() ? "application/octet-stream" : input.content_type);
        if (!res) throw ActivityFailure("InferError(unreachable): " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw ActivityFailure("InferError(" + std::to_string(res->status) + "): " + res->body);
        }
        try {
            ctx.detections[name] = parse_detection_json(res->body);
        } catch (const std::exception& e) {
            throw ActivityFailure("InferError(200): unparseable response: " + std::string(e.what()));
        }
    };

    auto render = [&](const RenderConfig& cfg) {
        auto& input = require_input("RenderError");
        auto found = ctx.detections.find(cfg.detections_from);
        if (found == ctx.detections.end()) {
            throw ActivityFailure("RenderError: no detections from '" + cfg.detections_from + "'");
        }
        const auto& result = found->second;
        Bytes annotated;
        on_pool(pool_, "RenderError", [&] {
            annotated = encode_jpeg(render_boxes(decode_image(input.bytes), result.boxes, cfg.style),
                                    options_.render_quality);
        });
        const auto container = eval(cfg.sink.container_expr, ctx);
        const auto path = eval(cfg.sink.path_expr, ctx);
        try {
            store_.put_blob(container, path, std::move(annotated), "image/jpeg");
            store_.put_blob(container, sidecar_path(path), to_detection_json(result), "application/json");
        } catch (const std::exception& e) {
            throw ActivityFailure("RenderError: " + std::string(e.what()));
        }
    };

    bool failed = false;
    for (std::size_t i = 0; i < def.activities.size(); ++i) {
        const auto& activity = def.activities[i];
        if (failed) {
            update(s, [&](PipelineRun& run) {
                run.activities.push_back(ActivityRecord{activity.name, ActivityStatus::Skipped, {}, {}, {}, 0});
            });
            continue;
        }
        update(s, [&](PipelineRun& run) {
            const auto prev = run.activities.empty() ? *run.started_at : *run.activities.back().ended_at;
            run.activities.push_back(
                ActivityRecord{activity.name, ActivityStatus::InProgress, std::max(clock_.now(), prev), {}, {}, 0});
        });

        std::optional<std::string> error;
        int attempts = 0;
        for (; attempts < 1 + activity.retries;) {
            ++attempts;
            error.reset();
            if (SteadyClock::now() >= ctx.deadline) {
                error = "RunTimeout: run exceeded " + std::to_string(options_.run_timeout.count()) + " ms";
                break;
            }
            try {
                std::visit(
                    [&](const auto& cfg) {
                        using T = std::decay_t<decltype(cfg)>;
                        if constexpr (std::is_same_v<T, CopyConfig>) copy(cfg);
                        else if constexpr (std::is_same_v<T, ProcessConfig>) process(cfg);
                        else if constexpr (std::is_same_v<T, InferConfig>) infer(activity.name, cfg);
                        else render(cfg);
                    },
                    activity.config);
            } catch (const ActivityFailure& e) {
                error = e.what();
            } catch (const std::exception& e) {
                error = std::string(to_string(activity.kind())) + "Error: " + e.what();
            }
            if (!error) break;
        }

        update(s, [&](PipelineRun& run) {
            auto& rec = run.activities.back();
            rec.attempts = attempts;
            rec.ended_at = std::max(clock_.now(), *rec.started_at);
            rec.status = error ? ActivityStatus::Failed : ActivityStatus::Succeeded;
            rec.error = error;
        });
        if (error) failed = true;
    }

    update(s, [&](PipelineRun& run) {
        const auto last = run.activities.empty() ? *run.started_at : run.activities.back().ended_at.value_or(*run.started_at);
        run.ended_at = std::max(clock_.now(), last);
        run.status = failed ? RunStatus::Failed : RunStatus::Succeeded;
        if (failed) {
            for (const auto& a : run.activities)
                if (a.status == ActivityStatus::Failed) run.error = a.name + ": " + a.error.value_or("failed");
        }
    });
}

void Orchestrator::shutdown() {
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) return;
        stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_)
        if (t.joinable()) t.join();
    done_cv_.notify_all();
}

}  // namespace bloompipe
