#include "bloompipe/trigger_engine.hpp"

#include <cstdio>

#include "bloompipe/error.hpp"

namespace bloompipe {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(TriggerKind kind) {
    return kind == TriggerKind::Event ? "Event" : "Schedule";
}

std::set<std::string> binding_fields(const TriggerSpec& spec) {
    if (spec.kind == TriggerKind::Event) return {"event.container", "event.path"};
    std::set<std::string> fields{"schedule.fire_time"};
    if (spec.batch_source) {
        fields.insert("batch.container");
        fields.insert("batch.path");
    }
    return fields;
}

ordered_json to_json(const TriggerSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["kind"] = to_string(spec.kind);
    j["pipeline"] = spec.pipeline;
    j["bindings"] = spec.bindings;
    if (spec.cron) j["cron"] = *spec.cron;
    j["enabled"] = spec.enabled;
    if (spec.event_filter) {
        ordered_json kinds = ordered_json::array();
        for (auto k : spec.event_filter->kinds) kinds.push_back(to_string(k));
        j["event_filter"] = ordered_json{{"container", spec.event_filter->container},
                                         {"path_prefix", spec.event_filter->path_prefix},
                                         {"path_suffix", spec.event_filter->path_suffix},
                                         {"kinds", kinds}};
    }
    if (spec.batch_source) {
        j["batch_source"] =
            ordered_json{{"container", spec.batch_source->container}, {"prefix", spec.batch_source->prefix}};
    }
    return j;
}

TriggerSpec trigger_from_json(const json& j) {
    TriggerSpec spec;
    try {
        spec.name = j.at("name").get<std::string>();
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "Event") {
            spec.kind = TriggerKind::Event;
        } else if (kind == "Schedule") {
            spec.kind = TriggerKind::Schedule;
        } else {
            throw Error(Errc::Validation, "trigger kind must be Event or Schedule");
        }
        spec.pipeline = j.at("pipeline").get<std::string>();
        spec.bindings = j.value("bindings", std::map<std::string, std::string>{});
        if (j.contains("cron") && !j.at("cron").is_null()) spec.cron = j.at("cron").get<std::string>();
        spec.enabled = j.value("enabled", true);
        if (j.contains("event_filter")) {
            const auto& f = j.at("event_filter");
            EventFilter filter;
            filter.container = f.at("container").get<std::string>();
            filter.path_prefix = f.value("path_prefix", "");
            filter.path_suffix = f.value("path_suffix", "");
            if (f.contains("kinds")) {
                filter.kinds.clear();
                for (const auto& k : f.at("kinds")) filter.kinds.insert(parse_event_kind(k.get<std::string>()));
            }
            spec.event_filter = filter;
        }
        if (j.contains("batch_source")) {
            const auto& b = j.at("batch_source");
            spec.batch_source = BatchSource{b.at("container").get<std::string>(), b.value("prefix", "")};
        }
    } catch (const json::exception& e) {
        throw Error(Errc::Validation, std::string("trigger schema: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::Validation) throw;
        throw Error(Errc::Validation, e.what());
    }
    return spec;
}

TriggerEngine::TriggerEngine(EventBus& bus, RunStarter& runs, const Clock& clock, BlobLister lister)
    : bus_(bus), runs_(runs), clock_(clock), lister_(std::move(lister)) {}

TriggerEngine::~TriggerEngine() {
    stop();
    std::vector<std::string> subs;
    {
        std::unique_lock lock(mutex_);
        for (const auto& [name, e] : entries_) {
            if (!e->subscription_id.empty()) subs.push_back(e->subscription_id);
        }
    }
    for (const auto& id : subs) bus_.unsubscribe(id);
    std::unique_lock lock(mutex_);
    for (const auto& [name, e] : entries_) bus_.unregister_target("trigger:" + name);
}

std::shared_ptr<TriggerEngine::Entry> TriggerEngine::find(const std::string& name) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(Errc::UnknownTrigger, "unknown trigger: " + name);
    return it->second;
}

void TriggerEngine::register_trigger(const TriggerSpec& spec) {
    if (spec.name.empty()) throw Error(Errc::Validation, "trigger name is required");
    if (!runs_.has_pipeline(spec.pipeline)) {
        throw Error(Errc::UnknownPipeline, "unknown pipeline: " + spec.pipeline);
    }

    auto entry = std::make_shared<Entry>();
    entry->spec = spec;
    if (spec.kind == TriggerKind::Event) {
        if (spec.cron) throw Error(Errc::Validation, "event triggers take no cron expression");
        if (spec.batch_source) throw Error(Errc::Validation, "event triggers take no batch_source");
        if (!spec.event_filter || spec.event_filter->container.empty()) {
            throw Error(Errc::Validation, "event triggers need an event_filter with a container");
        }
    } else {
        if (!spec.cron) throw Error(Errc::Validation, "schedule triggers need a cron expression");
        if (spec.event_filter) throw Error(Errc::Validation, "schedule triggers take no event_filter");
        entry->cron = CronExpr::parse(*spec.cron);
    }

    const auto allowed = binding_fields(spec);
    for (const auto& [param, source] : spec.bindings) {
        auto expr = Expression::parse(source);
        for (const auto& ref : expr.references()) {
            if (!allowed.count(ref)) {
                throw Error(Errc::BadBinding, "binding '" + param + "' references @" + ref + ", not available to " +
                                                  std::string(to_string(spec.kind)) + " triggers");
            }
        }
        entry->bindings.emplace(param, std::move(expr));
    }

    {
        std::unique_lock lock(mutex_);
        if (entries_.count(spec.name)) throw Error(Errc::DuplicateName, "trigger exists: " + spec.name);
        if (entry->cron && spec.enabled) entry->next_fire = entry->cron->next_fire(clock_.now());
        entries_[spec.name] = entry;
    }

    if (spec.kind == TriggerKind::Event) {
        const auto target = "trigger:" + spec.name;
        bus_.register_target(target, [this, name = spec.name](const BlobEvent& ev) { on_event(name, ev); });
        const auto sub = bus_.subscribe(*spec.event_filter, target);
        std::unique_lock lock(mutex_);
        entry->subscription_id = sub.subscription_id;
    }
}

void TriggerEngine::enable(const std::string& name) {
    auto entry = find(name);
    std::unique_lock lock(mutex_);
    entry->spec.enabled = true;
    if (entry->cron) entry->next_fire = entry->cron->next_fire(clock_.now());
}

void TriggerEngine::disable(const std::string& name) {
    auto entry = find(name);
    std::unique_lock lock(mutex_);
    entry->spec.enabled = false;
    entry->next_fire.reset();
}

TriggerStatus TriggerEngine::status(const std::string& name) const {
    auto entry = find(name);
    std::shared_lock lock(mutex_);
    return {entry->spec, entry->next_fire, entry->fire_count, entry->last_fire};
}

std::vector<TriggerStatus> TriggerEngine::list() const {
    std::shared_lock lock(mutex_);
    std::vector<TriggerStatus> out;
    for (const auto& [_, e] : entries_) out.push_back({e->spec, e->next_fire, e->fire_count, e->last_fire});
    return out;
}

namespace {

std::string start_bound_run(RunStarter& runs, const TriggerSpec& spec, const std::map<std::string, Expression>& bindings,
                  const ExprContext& context) {
    ParameterMap params;
    for (const auto& [param, expr] : bindings) params[param] = expr.evaluate(context);
    try {
        return runs.start_run(spec.pipeline, params, TriggerSource{spec.name, std::string(to_string(spec.kind))});
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(Errc::OrchestratorUnavailable, e.what());
    }
}

}  // namespace

std::string TriggerEngine::fire(const std::string& name, const ExprContext& context) {
    auto entry = find(name);
    TriggerSpec spec;
    {
        std::shared_lock lock(mutex_);
        if (!entry->spec.enabled) throw Error(Errc::TriggerDisabled, "trigger disabled: " + name);
        spec = entry->spec;
    }
    auto run_id = start_bound_run(runs_, spec, entry->bindings, context);
    std::unique_lock lock(mutex_);
    ++entry->fire_count;
    entry->last_fire = clock_.now();
    return run_id;
}

void TriggerEngine::on_event(const std::string& name, const BlobEvent& event) {
    {
        auto entry = find(name);
        std::shared_lock lock(mutex_);
        if (!entry->spec.enabled) return;  // delivered, deliberately ignored
    }
    fire(name, ExprContext{{"event.container", event.container}, {"event.path", event.path}});
}

void TriggerEngine::fire_schedule(const std::string& name, Timestamp fire_time) {
    auto entry = find(name);
    TriggerSpec spec;
    {
        std::shared_lock lock(mutex_);
        spec = entry->spec;
    }
    ExprContext context{{"schedule.fire_time", format_rfc3339(fire_time)}};
    try {
        if (!spec.batch_source || !lister_) {
            start_bound_run(runs_, spec, entry->bindings, context);
            return;
        }
        for (const auto& blob : lister_(spec.batch_source->container, spec.batch_source->prefix)) {
            const auto key = std::make_pair(blob.path, blob.version);
            if (entry->dispatched.count(key)) continue;
            context["batch.container"] = blob.container;
            context["batch.path"] = blob.path;
            start_bound_run(runs_, spec, entry->bindings, context);
            entry->dispatched.insert(key);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "trigger %s: fire at %s failed: %s\n", name.c_str(),
                     format_rfc3339(fire_time).c_str(), e.what());
    }
}

std::size_t TriggerEngine::poll(Timestamp now) {
    std::lock_guard poll_guard(poll_mutex_);
    std::vector<std::pair<std::string, Timestamp>> due;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [name, e] : entries_) {
            if (e->spec.enabled && e->next_fire && *e->next_fire <= now) due.emplace_back(name, *e->next_fire);
        }
    }
    for (const auto& [name, when] : due) {
        fire_schedule(name, when);
        auto entry = find(name);
        std::unique_lock lock(mutex_);
        ++entry->fire_count;
        entry->last_fire = when;
        if (entry->spec.enabled) entry->next_fire = entry->cron->next_fire(now);
    }
    return due.size();
}

void TriggerEngine::start(Millis interval) {
    std::lock_guard lock(timer_mutex_);
    if (timer_.joinable()) return;
    timer_stop_ = false;
    timer_ = std::thread([this, interval] {
        std::unique_lock lk(timer_mutex_);
        while (!timer_stop_) {
            timer_cv_.wait_for(lk, interval, [&] { return timer_stop_; });
            if (timer_stop_) break;
            lk.unlock();
            poll(clock_.now());
            lk.lock();
        }
    });
}

void TriggerEngine::stop() {
    {
        std::lock_guard lock(timer_mutex_);
        timer_stop_ = true;
    }
    timer_cv_.notify_all();
    if (timer_.joinable()) timer_.join();
}

}  // namespace bloompipe
