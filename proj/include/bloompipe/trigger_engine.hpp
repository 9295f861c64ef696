#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "bloompipe/blob_store.hpp"
#include "bloompipe/cron.hpp"
#include "bloompipe/event_bus.hpp"
#include "bloompipe/expression.hpp"
#include "bloompipe/pipeline.hpp"
#include "bloompipe/time.hpp"
#include "json.hpp"

namespace bloompipe {

enum class TriggerKind { Event, Schedule };

std::string_view to_string(TriggerKind kind);

/// Blobs a schedule trigger sweeps on each fire: one run per blob not yet
/// dispatched by that trigger (keyed by path and version).
struct BatchSource {
    std::string container;
    std::string prefix;
};

struct TriggerSpec {
    std::string name;
    TriggerKind kind = TriggerKind::Event;
    std::string pipeline;
    std::map<std::string, std::string> bindings;  // parameter -> expression
    std::optional<std::string> cron;               // Schedule only
    bool enabled = true;
    std::optional<EventFilter> event_filter;       // Event only
    std::optional<BatchSource> batch_source;       // Schedule only
};

nlohmann::ordered_json to_json(const TriggerSpec& spec);
/// Throws Error{Validation} on schema errors.
TriggerSpec trigger_from_json(const nlohmann::json& j);

/// Context fields a binding may reference for this trigger.
std::set<std::string> binding_fields(const TriggerSpec& spec);

struct TriggerStatus {
    TriggerSpec spec;
    std::optional<Timestamp> next_fire;
    std::uint64_t fire_count = 0;
    std::optional<Timestamp> last_fire;
};

/// Lists blobs for batch sweeps.
using BlobLister = std::function<std::vector<BlobInfo>(const std::string& container,
                                                       const std::string& prefix)>;

/// Owns event triggers (bus targets) and cron schedule triggers.
///
/// Schedules are evaluated by poll(now): each due trigger fires once at its
/// scheduled minute and then jumps to the next fire after `now`, so fires
/// missed while the engine was not polling are skipped. start() runs poll
/// on a background thread against the engine clock.
class TriggerEngine {
public:
    TriggerEngine(EventBus& bus, RunStarter& runs, const Clock& clock, BlobLister lister = {});
    ~TriggerEngine();

    TriggerEngine(const TriggerEngine&) = delete;
    TriggerEngine& operator=(const TriggerEngine&) = delete;

    /// Errors: UnknownPipeline, DuplicateName, BadBinding, Validation.
    void register_trigger(const TriggerSpec& spec);
    void enable(const std::string& name);
    void disable(const std::string& name);
    std::vector<TriggerStatus> list() const;
    TriggerStatus status(const std::string& name) const;

    /// Resolves bindings against `context` and starts a run.
    /// Errors: UnknownTrigger, TriggerDisabled, BindingEvaluation,
    /// OrchestratorUnavailable.
    std::string fire(const std::string& name, const ExprContext& context);

    /// Fires every due schedule trigger; returns the number of fires.
    std::size_t poll(Timestamp now);

    void start(Millis interval = Millis{1000});
    void stop();

private:
    struct Entry {
        TriggerSpec spec;
        std::map<std::string, Expression> bindings;
        std::optional<CronExpr> cron;
        std::optional<Timestamp> next_fire;
        std::optional<Timestamp> last_fire;
        std::uint64_t fire_count = 0;
        std::string subscription_id;
        std::set<std::pair<std::string, std::uint64_t>> dispatched;
    };

    void on_event(const std::string& name, const BlobEvent& event);
    void fire_schedule(const std::string& name, Timestamp fire_time);
    std::shared_ptr<Entry> find(const std::string& name) const;

    EventBus& bus_;
    RunStarter& runs_;
    const Clock& clock_;
    BlobLister lister_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> entries_;
    std::mutex poll_mutex_;

    std::mutex timer_mutex_;
    std::condition_variable timer_cv_;
    bool timer_stop_ = false;
    std::thread timer_;
};

}  // namespace bloompipe
