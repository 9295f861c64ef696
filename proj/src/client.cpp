#include "bloompipe/client.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <thread>

#include "bloompipe/error.hpp"
#include "bloompipe/pipeline.hpp"
#include "httplib.h"

namespace bloompipe {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using WallClock = std::chrono::steady_clock;

namespace {

std::string encode(std::string_view text, bool keep_slash) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (const unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || (keep_slash && c == '/')) {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

std::string blob_url(const std::string& container, const std::string& path) {
    return "/v1/containers/" + encode(container, false) + "/blobs/" + encode(path, true);
}

[[noreturn]] void raise_from_response(int status, const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        throw Error(Errc::Http, "HTTP " + std::to_string(status) + (body.empty() ? "" : ": " + body));
    }
    if (!j.is_object() || !j.contains("error")) throw Error(Errc::Http, "HTTP " + std::to_string(status) + ": " + body);
    const auto code = errc_from_string(j["error"].get<std::string>());
    const auto message = j.value("message", j["error"].get<std::string>());
    if (code == Errc::Validation && j.contains("problems")) {
        throw ValidationError(j["problems"].get<std::vector<std::string>>());
    }
    throw Error(code, message);
}

std::string content_type_for(const fs::path& file) {
    auto ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".png") return "image/png";
    if (ext == ".json") return "application/json";
    return "application/octet-stream";
}

Bytes read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::InvalidArgument, "cannot read " + file.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

BlobInfo info_from_json(const json& j) {
    BlobInfo info;
    info.container = j.at("container").get<std::string>();
    info.path = j.at("path").get<std::string>();
    info.size = j.at("size").get<std::uint64_t>();
    info.version = j.at("version").get<std::uint64_t>();
    info.content_type = j.value("content_type", "");
    if (j.contains("created_at")) info.created_at = parse_rfc3339(j["created_at"].get<std::string>());
    return info;
}

}  // namespace

// ---------------------------------------------------------------- rest

RestClient::RestClient(std::string base_url, Millis timeout)
    : base_url_(std::move(base_url)), client_(std::make_unique<httplib::Client>(base_url_)) {
    if (!client_->is_valid()) throw Error(Errc::InvalidArgument, "bad url: " + base_url_);
    client_->set_url_encode(false);
    client_->set_keep_alive(true);
    client_->set_tcp_nodelay(true);
    client_->set_connection_timeout(timeout);
    client_->set_read_timeout(timeout);
    client_->set_write_timeout(timeout);
}

RestClient::~RestClient() = default;

std::string RestClient::request(const std::string& method, const std::string& path, const std::string& body,
                                const std::string& content_type, std::initializer_list<int> expect,
                                std::map<std::string, std::string>* response_headers) {
    std::lock_guard lock(mutex_);
    httplib::Result res;
    if (method == "GET") {
        res = client_->Get(path);
    } else if (method == "POST") {
        res = client_->Post(path, body, content_type);
    } else if (method == "PUT") {
        res = client_->Put(path, body, content_type);
    } else if (method == "DELETE") {
        res = client_->Delete(path);
    } else {
        throw Error(Errc::InvalidArgument, "unsupported method " + method);
    }
    if (!res) throw Error(Errc::Unreachable, "cannot reach " + base_url_ + ": " + httplib::to_string(res.error()));
    if (std::find(expect.begin(), expect.end(), res->status) == expect.end()) {
        raise_from_response(res->status, res->body);
    }
    if (response_headers) {
        for (const auto& [k, v] : res->headers) {
            std::string key = k;
            std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
            (*response_headers)[key] = v;
        }
    }
    return std::move(res->body);
}

json RestClient::get(const std::string& path) {
    return json::parse(request("GET", path, {}, {}, {200}));
}

json RestClient::post(const std::string& path, const json& body) {
    const auto text = request("POST", path, body.dump(), "application/json", {200, 201, 202});
    return text.empty() ? json() : json::parse(text);
}

// ---------------------------------------------------------------- store

StoreClient::StoreClient(std::string base_url, Millis timeout) : rest_(std::move(base_url), timeout) {}

void StoreClient::create_container(const std::string& name) {
    rest_.post("/v1/containers", {{"name", name}});
}

std::vector<std::string> StoreClient::containers() {
    return rest_.get("/v1/containers").get<std::vector<std::string>>();
}

BlobInfo StoreClient::put_blob(const std::string& container, const std::string& path, Bytes bytes,
                               const std::string& content_type) {
    const auto text = rest_.request("PUT", blob_url(container, path), bytes,
                                    content_type.empty() ? "application/octet-stream" : content_type, {201});
    const auto j = json::parse(text);
    BlobInfo info;
    info.container = j.at("container").get<std::string>();
    info.path = j.at("path").get<std::string>();
    info.size = j.at("size").get<std::uint64_t>();
    info.version = j.at("version").get<std::uint64_t>();
    info.content_type = content_type;
    return info;
}

Blob StoreClient::get_blob(const std::string& container, const std::string& path) {
    Blob blob;
    std::map<std::string, std::string> headers;
    blob.bytes = rest_.request("GET", blob_url(container, path), {}, {}, {200}, &headers);
    blob.info.content_type = headers["content-type"];
    if (const auto& v = headers["x-blob-version"]; !v.empty()) blob.info.version = std::stoull(v);
    if (const auto& t = headers["x-blob-created-at"]; !t.empty()) blob.info.created_at = parse_rfc3339(t);
    blob.info.container = container;
    blob.info.path = path;
    blob.info.size = blob.bytes.size();
    return blob;
}

std::vector<BlobInfo> StoreClient::list_blobs(const std::string& container, const std::string& prefix) {
    auto url = "/v1/containers/" + encode(container, false) + "/blobs";
    if (!prefix.empty()) url += "?prefix=" + encode(prefix, false);
    std::vector<BlobInfo> out;
    for (const auto& j : rest_.get(url)) out.push_back(info_from_json(j));
    return out;
}

void StoreClient::delete_blob(const std::string& container, const std::string& path) {
    rest_.request("DELETE", blob_url(container, path), {}, {}, {204});
}

void StoreClient::set_latency(Millis latency) {
    rest_.post("/v1/admin/latency", {{"ms", latency.count()}});
}

json StoreClient::stats() { return rest_.get("/v1/admin/stats"); }

void StoreClient::reset_stats() { rest_.post("/v1/admin/stats/reset", json::object()); }

// ---------------------------------------------------------------- orchestrator

OrchestratorClient::OrchestratorClient(std::string base_url, Millis timeout) : rest_(std::move(base_url), timeout) {}

json OrchestratorClient::apply_pipeline(const json& definition) { return rest_.post("/v1/pipelines", definition); }

json OrchestratorClient::pipelines() { return rest_.get("/v1/pipelines"); }

std::string OrchestratorClient::start_run(const std::string& pipeline, const std::map<std::string, std::string>& parameters) {
    const auto res = rest_.post("/v1/pipelines/" + encode(pipeline, false) + "/runs", {{"parameters", parameters}});
    return res.at("run_id").get<std::string>();
}

json OrchestratorClient::get_run(const std::string& run_id) { return rest_.get("/v1/runs/" + encode(run_id, false)); }

json OrchestratorClient::list_runs(const std::map<std::string, std::string>& query) {
    std::string url = "/v1/runs";
    char sep = '?';
    for (const auto& [k, v] : query) {
        url += sep + encode(k, false) + "=" + encode(v, false);
        sep = '&';
    }
    return rest_.get(url);
}

json OrchestratorClient::apply_trigger(const json& spec) { return rest_.post("/v1/triggers", spec); }

json OrchestratorClient::set_trigger_enabled(const std::string& name, bool enabled) {
    return rest_.post("/v1/triggers/" + encode(name, false) + (enabled ? "/enable" : "/disable"), json::object());
}

json OrchestratorClient::triggers() { return rest_.get("/v1/triggers"); }

json OrchestratorClient::dead_letters() { return rest_.get("/v1/dead-letters"); }

json OrchestratorClient::pool() { return rest_.get("/v1/pool"); }

json OrchestratorClient::advance_clock(Millis by) { return rest_.post("/v1/clock/advance", {{"ms", by.count()}}); }

DetectionResult score_remote(const std::string& detector_url, const std::string& key, const Bytes& image,
                             const std::string& filename) {
    httplib::Client client(detector_url);
    client.set_tcp_nodelay(true);
    client.set_read_timeout(Millis{30'000});
    httplib::Headers headers{{"X-Filename", filename}};
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    auto res = client.Post("/v1/score", headers, image, "application/octet-stream");
    if (!res) throw Error(Errc::Unreachable, "cannot reach " + detector_url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw Error(Errc::Http, "detector answered " + std::to_string(res->status) + ": " + res->body);
    }
    return parse_detection_json(res->body);
}

// ---------------------------------------------------------------- ingestion

std::vector<fs::path> list_source_files(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(Errc::InvalidArgument, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

IngestSummary ingest(const std::string& store_url, const IngestPlan& plan) {
    if (plan.concurrency < 1) throw Error(Errc::InvalidArgument, "concurrency must be >= 1");
    const auto files = list_source_files(plan.source_dir);
    if (files.empty()) throw Error(Errc::InvalidArgument, "no files in " + plan.source_dir.string());

    std::vector<Bytes> payloads;
    payloads.reserve(files.size());
    for (const auto& f : files) payloads.push_back(read_file(f));

    // Fails fast on a missing container or a dead store.
    StoreClient(store_url).list_blobs(plan.container, "\x01");

    IngestSummary summary;
    summary.files.resize(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        summary.files[i].file = files[i].string();
        summary.files[i].path = plan.prefix + files[i].filename().string();
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex abort_mutex;
    std::exception_ptr abort_error;

    auto upload_loop = [&] {
        StoreClient client(store_url);
        for (;;) {
            if (abort) return;
            const auto i = next++;
            if (i >= files.size()) return;
            auto& r = summary.files[i];
            try {
                client.put_blob(plan.container, r.path, payloads[i], content_type_for(files[i]));
                r.ok = true;
                r.status = 201;
            } catch (const Error& e) {
                if (e.code() == Errc::Unreachable || e.code() == Errc::UnknownContainer) {
                    std::lock_guard lock(abort_mutex);
                    if (!abort_error) abort_error = std::current_exception();
                    abort = true;
                    return;
                }
                r.status = http_status(e.code());
                r.reason = std::string(to_string(e.code())) + ": " + e.what();
            }
        }
    };

    const auto started = WallClock::now();
    if (plan.mode == IngestMode::Sync) {
        upload_loop();
    } else {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(plan.concurrency), files.size());
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < n; ++w) workers.emplace_back(upload_loop);
        for (auto& t : workers) t.join();
    }
    summary.wall = WallClock::now() - started;
    if (abort_error) std::rethrow_exception(abort_error);

    for (std::size_t i = 0; i < files.size(); ++i) {
        if (summary.files[i].ok) {
            ++summary.succeeded;
            summary.bytes += payloads[i].size();
        } else {
            ++summary.failed;
        }
    }
    return summary;
}

ordered_json to_json(const IngestSummary& summary, bool per_file) {
    ordered_json j{{"succeeded", summary.succeeded},
                   {"failed", summary.failed},
                   {"bytes", summary.bytes},
                   {"wall_s", summary.wall.count()}};
    if (per_file) {
        auto arr = ordered_json::array();
        for (const auto& f : summary.files) {
            ordered_json e{{"file", f.file}, {"path", f.path}, {"ok", f.ok}, {"status", f.status}};
            if (!f.reason.empty()) e["reason"] = f.reason;
            arr.push_back(std::move(e));
        }
        j["files"] = std::move(arr);
    }
    return j;
}

namespace {

void clean_container(StoreClient& store, const std::string& container) {
    for (const auto& info : store.list_blobs(container)) store.delete_blob(container, info.path);
}

ModeTiming run_mode(const std::string& store_url, StoreClient& store, const fs::path& dir,
                    const std::string& container, IngestMode mode, int concurrency, bool stats, bool& complete,
                    std::size_t expected) {
    clean_container(store, container);
    if (stats) store.reset_stats();
    const auto summary = ingest(store_url, IngestPlan{mode, concurrency, dir, container, ""});
    ModeTiming t;
    t.wall = summary.wall;
    t.files_per_s = static_cast<double>(summary.succeeded) / summary.wall.count();
    t.bytes_per_s = static_cast<double>(summary.bytes) / summary.wall.count();
    if (stats) t.max_in_flight = store.stats().value("max_in_flight", -1);
    complete = complete && summary.failed == 0 && store.list_blobs(container).size() == expected;
    return t;
}

}  // namespace

BenchReport bench_ingest(const std::string& store_url, const fs::path& source_dir, const std::string& container,
                         int concurrency, std::optional<Millis> latency) {
    if (concurrency < 1) throw Error(Errc::InvalidArgument, "concurrency must be >= 1");
    StoreClient store(store_url);
    bool stats = true;
    try {
        if (latency) store.set_latency(*latency);
        const auto s = store.stats();
        if (!latency) latency = Millis{s.value("latency_ms", 0)};
    } catch (const Error& e) {
        if (e.code() == Errc::Unreachable || latency) {
            if (e.code() == Errc::NotFound) throw Error(Errc::InvalidArgument, "store is not running in test mode");
            throw;
        }
        stats = false;
        latency = Millis{0};
    }

    const auto files = list_source_files(source_dir);
    BenchReport r;
    r.files = files.size();
    for (const auto& f : files) r.bytes += fs::file_size(f);
    r.concurrency = concurrency;
    r.latency = *latency;
    r.complete = true;
    r.sync = run_mode(store_url, store, source_dir, container, IngestMode::Sync, 1, stats, r.complete, r.files);
    r.async = run_mode(store_url, store, source_dir, container, IngestMode::Async, concurrency, stats, r.complete,
                       r.files);
    r.speedup = r.sync.wall.count() / r.async.wall.count();

    const double l = std::chrono::duration<double>(r.latency).count();
    const double n = static_cast<double>(r.files);
    r.sync_bound_ok = r.sync.wall.count() >= n * l;
    r.async_bound_ok = r.async.wall.count() <= 2.0 * std::ceil(n / concurrency) * l;
    return r;
}

ordered_json to_json(const BenchReport& r) {
    auto mode = [](const ModeTiming& t) {
        ordered_json j{{"wall_s", t.wall.count()}, {"files_per_s", t.files_per_s}, {"bytes_per_s", t.bytes_per_s}};
        if (t.max_in_flight >= 0) j["max_in_flight"] = t.max_in_flight;
        return j;
    };
    return {{"files", r.files},
            {"bytes", r.bytes},
            {"concurrency", r.concurrency},
            {"latency_ms", r.latency.count()},
            {"sync", mode(r.sync)},
            {"async", mode(r.async)},
            {"speedup", r.speedup},
            {"sync_bound_ok", r.sync_bound_ok},
            {"async_bound_ok", r.async_bound_ok},
            {"complete", r.complete}};
}

}  // namespace bloompipe
