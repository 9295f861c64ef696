#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "bloompipe/events.hpp"
#include "bloompipe/time.hpp"

namespace bloompipe {

using Bytes = std::string;

struct BlobInfo {
    std::string container;
    std::string path;
    std::string content_type;
    std::uint64_t size = 0;
    Timestamp created_at{};
    std::uint64_t version = 0;
};

struct Blob {
    BlobInfo info;
    Bytes bytes;
};

bool is_valid_container_name(std::string_view name);
bool is_valid_blob_path(std::string_view path);

/// Object storage contract shared by the local store and its HTTP client.
class ObjectStore {
public:
    virtual ~ObjectStore() = default;

    virtual void create_container(const std::string& name) = 0;
    virtual BlobInfo put_blob(const std::string& container, const std::string& path, Bytes bytes,
                              const std::string& content_type) = 0;
    virtual Blob get_blob(const std::string& container, const std::string& path) = 0;
    virtual std::vector<BlobInfo> list_blobs(const std::string& container,
                                             const std::string& prefix) = 0;
    virtual void delete_blob(const std::string& container, const std::string& path) = 0;
};

/// Filesystem-backed store laid out as root/{container}/{path}.
///
/// Per-container metadata (version, content type, creation time) lives in an
/// append-only index at root/.meta/{container}.log and is replayed on open.
/// Overwrites go through a temp file and rename, so readers never observe a
/// partially written body. Events are published only after the rename.
class BlobStore final : public ObjectStore {
public:
    struct Options {
        std::filesystem::path root;
        std::uint64_t max_blob_bytes = 64ull << 20;
    };

    explicit BlobStore(Options options, EventPublisher publisher = {});
    ~BlobStore() override;

    BlobStore(const BlobStore&) = delete;
    BlobStore& operator=(const BlobStore&) = delete;

    /// Must be called before concurrent use.
    void set_publisher(EventPublisher publisher);

    void create_container(const std::string& name) override;
    bool has_container(const std::string& name) const;
    std::vector<std::string> containers() const;

    BlobInfo put_blob(const std::string& container, const std::string& path, Bytes bytes,
                      const std::string& content_type) override;
    Blob get_blob(const std::string& container, const std::string& path) override;
    std::vector<BlobInfo> list_blobs(const std::string& container,
                                     const std::string& prefix) override;
    void delete_blob(const std::string& container, const std::string& path) override;

    std::uint64_t max_blob_bytes() const { return options_.max_blob_bytes; }
    const std::filesystem::path& root() const { return options_.root; }

private:
    struct Container {
        std::map<std::string, BlobInfo> live;
        std::map<std::string, std::uint64_t> last_version;
        std::ofstream index;
    };

    void load_index(const std::string& name);
    Container& container_or_throw(const std::string& name);
    const Container& container_or_throw(const std::string& name) const;
    std::mutex& path_lock(const std::string& container, const std::string& path);
    std::string next_event_id();
    void publish(EventKind kind, const BlobInfo& info);

    Options options_;
    EventPublisher publisher_;
    mutable std::shared_mutex meta_mutex_;
    std::map<std::string, std::unique_ptr<Container>> containers_;
    std::array<std::mutex, 64> path_locks_;
    std::atomic<std::uint64_t> event_seq_{0};
    std::atomic<std::uint64_t> temp_seq_{0};
    std::string instance_tag_;
    SystemClock clock_;
};

}  // namespace bloompipe
