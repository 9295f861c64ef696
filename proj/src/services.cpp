#include "bloompipe/services.hpp"

#include <algorithm>
#include <thread>

#include "bloompipe/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace bloompipe {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    ordered_json body{{"error", to_string(e.code())}, {"message", e.what()}};
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) body["problems"] = v->problems();
    send_json(res, http_status(e.code()), body);
}

/// Runs a handler, mapping exceptions onto error responses.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const json::exception& e) {
            send_error(res, Error(Errc::Parse, e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
        }
    };
}

json parse_body(const httplib::Request& req, bool allow_empty = false) {
    if (req.body.empty()) {
        if (allow_empty) return json::object();
        throw Error(Errc::Parse, "request body is empty");
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::Parse, std::string("request body is not JSON: ") + e.what());
    }
}

ordered_json info_json(const BlobInfo& info) {
    return {{"container", info.container}, {"path", info.path},          {"content_type", info.content_type},
            {"size", info.size},           {"version", info.version},    {"created_at", format_rfc3339(info.created_at)}};
}

ordered_json status_json(const TriggerStatus& s) {
    auto j = to_json(s.spec);
    j["fire_count"] = s.fire_count;
    j["next_fire"] = s.next_fire ? ordered_json(format_rfc3339(*s.next_fire)) : ordered_json(nullptr);
    j["last_fire"] = s.last_fire ? ordered_json(format_rfc3339(*s.last_fire)) : ordered_json(nullptr);
    return j;
}

ordered_json pool_json(const PoolState& s, const PoolConfig& c) {
    return {{"phase", to_string(s.phase)},
            {"active_workers", s.active_workers},
            {"queued_tasks", s.queued_tasks},
            {"running_tasks", s.running_tasks},
            {"last_activity_at", format_rfc3339(s.last_activity_at)},
            {"config",
             {{"min_workers", c.min_workers},
              {"max_workers", c.max_workers},
              {"cold_start_ms", c.cold_start.count()},
              {"idle_timeout_ms", c.idle_timeout.count()},
              {"tasks_per_worker", c.tasks_per_worker}}}};
}

std::size_t query_size(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return 0;
    const auto text = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used != text.size() || v < 0) throw std::invalid_argument(text);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, std::string(key) + " must be a non-negative integer");
    }
}

}  // namespace

// ---------------------------------------------------------------- store

StoreServer::StoreServer(BlobStore& store, Options options)
    : store_(store), options_(options), http_(options.threads) {
    auto& svr = http_.server();
    svr.set_payload_max_length(store_.max_blob_bytes());

    svr.Post("/v1/containers", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("name") || !body["name"].is_string()) {
            throw Error(Errc::InvalidName, "body must be {\"name\": \"...\"}");
        }
        const auto name = body["name"].get<std::string>();
        store_.create_container(name);
        send_json(res, 201, {{"name", name}});
    }));

    svr.Get("/v1/containers", guarded([this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, store_.containers());
    }));

    svr.Get(R"(/v1/containers/([^/]+)/blobs/?)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto prefix = req.has_param("prefix") ? req.get_param_value("prefix") : std::string{};
        auto arr = ordered_json::array();
        for (const auto& info : store_.list_blobs(req.matches[1], prefix)) arr.push_back(info_json(info));
        send_json(res, 200, arr);
    }));

    svr.Put(R"(/v1/containers/([^/]+)/blobs/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        struct InFlight {
            StoreServer& s;
            bool on;
            InFlight(StoreServer& server, bool enabled) : s(server), on(enabled) {
                if (!on) return;
                const int now = ++s.in_flight_;
                int seen = s.max_in_flight_.load();
                while (now > seen && !s.max_in_flight_.compare_exchange_weak(seen, now)) {
                }
            }
            ~InFlight() {
                if (on) --s.in_flight_;
            }
        } guard(*this, options_.test_mode);
        if (options_.test_mode) {
            const auto latency = latency_ms_.load();
            if (latency > 0) std::this_thread::sleep_for(Millis{latency});
        }
        auto type = req.get_header_value("Content-Type");
        if (type.empty()) type = "application/octet-stream";
        const auto info = store_.put_blob(req.matches[1], req.matches[2], req.body, type);
        ++puts_;
        send_json(res, 201, {{"container", info.container}, {"path", info.path}, {"size", info.size}, {"version", info.version}});
    }));

    svr.Get(R"(/v1/containers/([^/]+)/blobs/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto blob = store_.get_blob(req.matches[1], req.matches[2]);
        res.status = 200;
        res.set_header("X-Blob-Version", std::to_string(blob.info.version));
        res.set_header("X-Blob-Created-At", format_rfc3339(blob.info.created_at));
        res.set_content(std::move(blob.bytes), blob.info.content_type);
    }));

    svr.Delete(R"(/v1/containers/([^/]+)/blobs/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        store_.delete_blob(req.matches[1], req.matches[2]);
        res.status = 204;
    }));

    if (options_.test_mode) {
        svr.Get("/v1/admin/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
            const auto s = stats();
            send_json(res, 200, {{"puts", s.puts}, {"in_flight", s.in_flight}, {"max_in_flight", s.max_in_flight},
                                 {"latency_ms", s.latency.count()}});
        }));
        svr.Post("/v1/admin/stats/reset", guarded([this](const httplib::Request&, httplib::Response& res) {
            reset_stats();
            send_json(res, 200, {{"reset", true}});
        }));
        svr.Post("/v1/admin/latency", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto ms = body.value("ms", std::int64_t{-1});
            if (ms < 0) throw Error(Errc::InvalidArgument, "ms must be a non-negative integer");
            set_latency(Millis{ms});
            send_json(res, 200, {{"latency_ms", ms}});
        }));
    }

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) {
            send_json(res, 413, {{"error", "BlobTooLarge"}, {"message", "payload too large"}});
        } else if (res.status == 404) {
            send_json(res, 404, {{"error", "NotFound"}, {"message", "no such route"}});
        }
    });
}

StoreServer::~StoreServer() { stop(); }

int StoreServer::start(const std::string& host, int port) { return http_.start(host, port); }

void StoreServer::stop() { http_.stop(); }

StoreStats StoreServer::stats() const {
    return StoreStats{puts_.load(), in_flight_.load(), max_in_flight_.load(), Millis{latency_ms_.load()}};
}

void StoreServer::reset_stats() {
    puts_ = 0;
    max_in_flight_ = in_flight_.load();
}

// ---------------------------------------------------------------- orchestrator

OrchestratorServer::OrchestratorServer(Orchestrator& orch, TriggerEngine& triggers, EventBus& bus,
                                       ComputePool& pool, ManualClock* manual_clock, int threads)
    : http_(threads) {
    auto& svr = http_.server();

    svr.Post("/v1/pipelines", guarded([&orch](const httplib::Request& req, httplib::Response& res) {
        const auto def = pipeline_from_json(parse_body(req));
        orch.apply_pipeline(def);
        send_json(res, 201, to_json(def));
    }));

    svr.Get("/v1/pipelines", guarded([&orch](const httplib::Request&, httplib::Response& res) {
        auto arr = ordered_json::array();
        for (const auto& def : orch.pipelines()) arr.push_back(to_json(def));
        send_json(res, 200, arr);
    }));

    svr.Post(R"(/v1/pipelines/([^/]+)/runs)", guarded([&orch](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, true);
        ParameterMap params;
        if (body.contains("parameters")) {
            const auto& p = body["parameters"];
            if (!p.is_object()) throw Error(Errc::InvalidArgument, "parameters must be an object");
            for (const auto& [k, v] : p.items()) {
                if (!v.is_string()) throw Error(Errc::InvalidArgument, "parameter '" + k + "' must be a string");
                params[k] = v.get<std::string>();
            }
        }
        const auto id = orch.start_run(req.matches[1], params, TriggerSource{});
        send_json(res, 202, {{"run_id", id}});
    }));

    svr.Get(R"(/v1/runs/([^/]+))", guarded([&orch](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, to_json(orch.get_run(req.matches[1])));
    }));

    svr.Get("/v1/runs", guarded([&orch](const httplib::Request& req, httplib::Response& res) {
        RunFilter filter;
        if (req.has_param("pipeline")) filter.pipeline = req.get_param_value("pipeline");
        if (req.has_param("status")) filter.status = parse_run_status(req.get_param_value("status"));
        if (req.has_param("since")) filter.since = parse_rfc3339(req.get_param_value("since"));
        filter.offset = query_size(req, "offset");
        filter.limit = query_size(req, "limit");
        const auto page = orch.list_runs(filter);
        auto runs = ordered_json::array();
        for (const auto& r : page.runs) runs.push_back(to_json(r));
        send_json(res, 200, {{"total", page.total}, {"offset", filter.offset}, {"runs", runs}});
    }));

    svr.Post("/v1/triggers", guarded([&triggers](const httplib::Request& req, httplib::Response& res) {
        const auto spec = trigger_from_json(parse_body(req));
        triggers.register_trigger(spec);
        send_json(res, 201, status_json(triggers.status(spec.name)));
    }));

    svr.Get("/v1/triggers", guarded([&triggers](const httplib::Request&, httplib::Response& res) {
        auto arr = ordered_json::array();
        for (const auto& s : triggers.list()) arr.push_back(status_json(s));
        send_json(res, 200, arr);
    }));

    svr.Post(R"(/v1/triggers/([^/]+)/(enable|disable))",
             guarded([&triggers](const httplib::Request& req, httplib::Response& res) {
                 const std::string name = req.matches[1];
                 if (req.matches[2] == "enable") {
                     triggers.enable(name);
                 } else {
                     triggers.disable(name);
                 }
                 send_json(res, 200, status_json(triggers.status(name)));
             }));

    svr.Get("/v1/dead-letters", guarded([&bus](const httplib::Request&, httplib::Response& res) {
        auto arr = ordered_json::array();
        for (const auto& d : bus.dead_letters()) {
            arr.push_back({{"event_id", d.event_id},
                           {"subscription_id", d.subscription_id},
                           {"attempts", d.attempts},
                           {"status", to_string(d.status)},
                           {"last_error", d.last_error}});
        }
        send_json(res, 200, arr);
    }));

    svr.Get("/v1/pool", guarded([&pool](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, pool_json(pool.state(), pool.config()));
    }));

    if (manual_clock) {
        // Steps minute by minute so every scheduled minute gets a poll.
        svr.Post("/v1/clock/advance",
                 guarded([manual_clock, &triggers, &pool](const httplib::Request& req, httplib::Response& res) {
                     const auto body = parse_body(req);
                     auto remaining = body.value("ms", std::int64_t{-1});
                     if (remaining < 0) throw Error(Errc::InvalidArgument, "ms must be a non-negative integer");
                     std::size_t fires = 0;
                     do {
                         const auto step = std::min<std::int64_t>(remaining, 60'000);
                         manual_clock->advance(Millis{step});
                         remaining -= step;
                         const auto now = manual_clock->now();
                         fires += triggers.poll(now);
                         pool.tick_idle(now);
                     } while (remaining > 0);
                     send_json(res, 200, {{"now", format_rfc3339(manual_clock->now())}, {"fires", fires}});
                 }));
    }

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty() && res.status == 404) {
            send_json(res, 404, {{"error", "NotFound"}, {"message", "no such route"}});
        }
    });
}

OrchestratorServer::~OrchestratorServer() { stop(); }

int OrchestratorServer::start(const std::string& host, int port) { return http_.start(host, port); }

void OrchestratorServer::stop() { http_.stop(); }

// ---------------------------------------------------------------- platform

std::unique_ptr<Clock> Platform::make_clock(const PlatformConfig& config) {
    if (!config.fake_clock) return std::make_unique<SystemClock>();
    const auto now = std::chrono::floor<std::chrono::minutes>(SystemClock{}.now());
    return std::make_unique<ManualClock>(std::chrono::time_point_cast<Millis>(now));
}

Platform::Platform(PlatformConfig config)
    : config_(std::move(config)),
      clock_(make_clock(config_)),
      manual_(config_.fake_clock ? static_cast<ManualClock*>(clock_.get()) : nullptr),
      bus_(config_.bus),
      store_(BlobStore::Options{config_.store_root}),
      pool_(config_.pool, *clock_),
      orchestrator_(Orchestrator::Options{config_.data_dir, config_.max_concurrent_runs, config_.run_timeout},
                    store_, pool_, *clock_),
      triggers_(bus_, orchestrator_, *clock_,
                [this](const std::string& c, const std::string& prefix) { return store_.list_blobs(c, prefix); }),
      store_server_(store_, StoreServer::Options{config_.store_test_mode}),
      orch_server_(orchestrator_, triggers_, bus_, pool_, manual_) {
    store_.set_publisher([this](const BlobEvent& e) { bus_.publish(e); });
}

Platform::~Platform() { stop(); }

void Platform::start() {
    const auto [store_host, store_port] = split_address(config_.store_address, 0);
    const auto [orch_host, orch_port] = split_address(config_.orch_address, 0);
    store_server_.start(store_host, store_port);
    orch_server_.start(orch_host, orch_port);
    if (!config_.fake_clock) triggers_.start(config_.trigger_poll);
    started_ = true;
}

void Platform::stop() {
    if (!started_) return;
    started_ = false;
    triggers_.stop();
    store_server_.stop();
    orch_server_.stop();
    bus_.shutdown();
    orchestrator_.shutdown();
    pool_.shutdown();
}

std::string Platform::store_url() const {
    return "http://127.0.0.1:" + std::to_string(store_server_.port());
}

std::string Platform::orch_url() const {
    return "http://127.0.0.1:" + std::to_string(orch_server_.port());
}

}  // namespace bloompipe
