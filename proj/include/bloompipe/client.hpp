#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bloompipe/blob_store.hpp"
#include "bloompipe/detection.hpp"
#include "bloompipe/time.hpp"
#include "json.hpp"

namespace httplib {
class Client;
}

namespace bloompipe {

/// JSON-over-HTTP helper shared by the clients. Error bodies of the form
/// {"error": <code>, "message": ...} are rethrown as the matching Error;
/// connection failures throw Error{Unreachable}.
class RestClient {
public:
    explicit RestClient(std::string base_url, Millis timeout = Millis{30'000});
    ~RestClient();

    RestClient(const RestClient&) = delete;
    RestClient& operator=(const RestClient&) = delete;

    nlohmann::json get(const std::string& path);
    nlohmann::json post(const std::string& path, const nlohmann::json& body);

    /// Raw access; `expect` lists the accepted statuses. Header names in
    /// `response_headers` are lower-cased.
    std::string request(const std::string& method, const std::string& path, const std::string& body,
                        const std::string& content_type, std::initializer_list<int> expect,
                        std::map<std::string, std::string>* response_headers = nullptr);

    const std::string& base_url() const { return base_url_; }

private:
    std::string base_url_;
    std::mutex mutex_;
    std::unique_ptr<httplib::Client> client_;
};

/// ObjectStore backed by the store REST API.
class StoreClient final : public ObjectStore {
public:
    explicit StoreClient(std::string base_url, Millis timeout = Millis{30'000});

    void create_container(const std::string& name) override;
    std::vector<std::string> containers();
    BlobInfo put_blob(const std::string& container, const std::string& path, Bytes bytes,
                      const std::string& content_type) override;
    Blob get_blob(const std::string& container, const std::string& path) override;
    std::vector<BlobInfo> list_blobs(const std::string& container, const std::string& prefix = "") override;
    void delete_blob(const std::string& container, const std::string& path) override;

    // Test-mode endpoints.
    void set_latency(Millis latency);
    nlohmann::json stats();
    void reset_stats();

private:
    RestClient rest_;
};

class OrchestratorClient {
public:
    explicit OrchestratorClient(std::string base_url, Millis timeout = Millis{30'000});

    nlohmann::json apply_pipeline(const nlohmann::json& definition);
    nlohmann::json pipelines();
    std::string start_run(const std::string& pipeline, const std::map<std::string, std::string>& parameters);
    nlohmann::json get_run(const std::string& run_id);
    /// Keys: pipeline, status, since, offset, limit.
    nlohmann::json list_runs(const std::map<std::string, std::string>& query = {});
    nlohmann::json apply_trigger(const nlohmann::json& spec);
    nlohmann::json set_trigger_enabled(const std::string& name, bool enabled);
    nlohmann::json triggers();
    nlohmann::json dead_letters();
    nlohmann::json pool();
    nlohmann::json advance_clock(Millis by);

private:
    RestClient rest_;
};

/// Posts an image to a detector service.
DetectionResult score_remote(const std::string& detector_url, const std::string& key,
                             const Bytes& image, const std::string& filename);

// ---------------------------------------------------------------- ingestion

enum class IngestMode { Sync, Async };

struct IngestPlan {
    IngestMode mode = IngestMode::Sync;
    int concurrency = 64;
    std::filesystem::path source_dir;
    std::string container;
    std::string prefix;
};

struct FileResult {
    std::string file;
    std::string path;
    bool ok = false;
    int status = 0;
    std::string reason;
};

struct IngestSummary {
    std::vector<FileResult> files;  // filename order
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::uint64_t bytes = 0;
    std::chrono::duration<double> wall{0};
};

/// Regular files directly under `dir`, sorted by name.
std::vector<std::filesystem::path> list_source_files(const std::filesystem::path& dir);

/// Uploads every file of plan.source_dir. Sync issues one PUT at a time in
/// filename order; async keeps at most plan.concurrency PUTs in flight.
/// Per-file HTTP errors are recorded; Unreachable and UnknownContainer abort.
IngestSummary ingest(const std::string& store_url, const IngestPlan& plan);

nlohmann::ordered_json to_json(const IngestSummary& summary, bool per_file);

struct ModeTiming {
    std::chrono::duration<double> wall{0};
    double files_per_s = 0;
    double bytes_per_s = 0;
    int max_in_flight = -1;  // -1 when the store does not report it
};

struct BenchReport {
    std::size_t files = 0;
    std::uint64_t bytes = 0;
    int concurrency = 0;
    Millis latency{0};
    ModeTiming sync;
    ModeTiming async;
    double speedup = 0;
    /// sync >= N*L and async <= 2*ceil(N/c)*L.
    bool sync_bound_ok = false;
    bool async_bound_ok = false;
    bool complete = false;  // both modes stored every file
};

/// Sync then async ingestion of the same files, each into a cleaned
/// container. A latency sets the store's injected PUT latency first (the
/// store must run in test mode).
BenchReport bench_ingest(const std::string& store_url, const std::filesystem::path& source_dir,
                         const std::string& container, int concurrency, std::optional<Millis> latency);

nlohmann::ordered_json to_json(const BenchReport& report);

}  // namespace bloompipe
