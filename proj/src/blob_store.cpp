#include "bloompipe/blob_store.hpp"

#include <functional>
#include <random>
#include <sstream>

#include "bloompipe/error.hpp"
#include "json.hpp"

namespace bloompipe {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_valid_container_name(std::string_view name) {
    if (name.size() < 3 || name.size() > 63) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
        if (!ok) return false;
    }
    return true;
}

bool is_valid_blob_path(std::string_view path) {
    if (path.empty() || path.front() == '/' || path.back() == '/') return false;
    if (path.size() > 1024) return false;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto end = std::min(path.find('/', start), path.size());
        const auto segment = path.substr(start, end - start);
        if (segment.empty() || segment == "." || segment == "..") return false;
        start = end + 1;
    }
    for (char c : path) {
        if (c == '\0' || c == '\\' || static_cast<unsigned char>(c) < 0x20) return false;
    }
    return true;
}

namespace {

json info_record(std::string_view op, const BlobInfo& info) {
    return json{{"op", op},
                {"path", info.path},
                {"version", info.version},
                {"size", info.size},
                {"content_type", info.content_type},
                {"created_at", format_rfc3339(info.created_at)}};
}

}  // namespace

BlobStore::BlobStore(Options options, EventPublisher publisher)
    : options_(std::move(options)), publisher_(std::move(publisher)) {
    std::error_code ec;
    fs::create_directories(options_.root / ".meta", ec);
    fs::create_directories(options_.root / ".tmp", ec);
    if (ec) {
        throw Error(Errc::StorageFailure,
                    "cannot initialise store root " + options_.root.string() + ": " + ec.message());
    }
    std::random_device rd;
    std::ostringstream tag;
    tag << std::hex << ((std::uint64_t(rd()) << 32) | rd());
    instance_tag_ = tag.str();

    for (const auto& entry : fs::directory_iterator(options_.root / ".meta")) {
        if (entry.path().extension() != ".log") continue;
        const auto name = entry.path().stem().string();
        if (is_valid_container_name(name)) load_index(name);
    }
}

BlobStore::~BlobStore() = default;

void BlobStore::set_publisher(EventPublisher publisher) { publisher_ = std::move(publisher); }

void BlobStore::load_index(const std::string& name) {
    auto container = std::make_unique<Container>();
    const auto log_path = options_.root / ".meta" / (name + ".log");
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // torn trailing line after a crash
        }
        const auto path = rec.at("path").get<std::string>();
        const auto version = rec.at("version").get<std::uint64_t>();
        container->last_version[path] = std::max(container->last_version[path], version);
        if (rec.at("op") == "put") {
            container->live[path] = BlobInfo{name,
                                             path,
                                             rec.at("content_type").get<std::string>(),
                                             rec.at("size").get<std::uint64_t>(),
                                             parse_rfc3339(rec.at("created_at").get<std::string>()),
                                             version};
        } else {
            container->live.erase(path);
        }
    }
    container->index.open(log_path, std::ios::app);
    containers_[name] = std::move(container);
}

void BlobStore::create_container(const std::string& name) {
    if (!is_valid_container_name(name)) {
        throw Error(Errc::InvalidName, "invalid container name: " + name);
    }
    std::unique_lock lock(meta_mutex_);
    if (containers_.count(name)) throw Error(Errc::AlreadyExists, "container exists: " + name);
    std::error_code ec;
    fs::create_directories(options_.root / name, ec);
    if (ec) throw Error(Errc::StorageFailure, "cannot create container " + name + ": " + ec.message());
    auto container = std::make_unique<Container>();
    container->index.open(options_.root / ".meta" / (name + ".log"), std::ios::app);
    if (!container->index) throw Error(Errc::StorageFailure, "cannot open index for " + name);
    containers_[name] = std::move(container);
}

bool BlobStore::has_container(const std::string& name) const {
    std::shared_lock lock(meta_mutex_);
    return containers_.count(name) > 0;
}

std::vector<std::string> BlobStore::containers() const {
    std::shared_lock lock(meta_mutex_);
    std::vector<std::string> names;
    for (const auto& [name, _] : containers_) names.push_back(name);
    return names;
}

BlobStore::Container& BlobStore::container_or_throw(const std::string& name) {
    auto it = containers_.find(name);
    if (it == containers_.end()) throw Error(Errc::UnknownContainer, "unknown container: " + name);
    return *it->second;
}

const BlobStore::Container& BlobStore::container_or_throw(const std::string& name) const {
    auto it = containers_.find(name);
    if (it == containers_.end()) throw Error(Errc::UnknownContainer, "unknown container: " + name);
    return *it->second;
}

std::mutex& BlobStore::path_lock(const std::string& container, const std::string& path) {
    const auto h = std::hash<std::string>{}(container + '\n' + path);
    return path_locks_[h % path_locks_.size()];
}

std::string BlobStore::next_event_id() {
    return "evt-" + instance_tag_ + "-" + std::to_string(++event_seq_);
}

void BlobStore::publish(EventKind kind, const BlobInfo& info) {
    if (!publisher_) return;
    BlobEvent event{next_event_id(), kind, info.container, info.path, info.size, clock_.now()};
    publisher_(event);
}

BlobInfo BlobStore::put_blob(const std::string& container, const std::string& path, Bytes bytes,
                             const std::string& content_type) {
    if (!is_valid_blob_path(path)) throw Error(Errc::InvalidPath, "invalid blob path: " + path);
    if (bytes.size() > options_.max_blob_bytes) {
        throw Error(Errc::BlobTooLarge, "blob exceeds " + std::to_string(options_.max_blob_bytes) +
                                            " bytes");
    }
    {
        std::shared_lock lock(meta_mutex_);
        container_or_throw(container);
    }

    std::lock_guard path_guard(path_lock(container, path));

    const auto temp = options_.root / ".tmp" / (instance_tag_ + "-" + std::to_string(++temp_seq_));
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) {
            std::error_code ignored;
            fs::remove(temp, ignored);
            throw Error(Errc::StorageFailure, "write failed for " + container + "/" + path);
        }
    }

    const auto final_path = options_.root / container / path;
    BlobInfo info;
    {
        std::unique_lock lock(meta_mutex_);
        auto& c = container_or_throw(container);
        std::error_code ec;
        fs::create_directories(final_path.parent_path(), ec);
        if (!ec) fs::rename(temp, final_path, ec);
        if (ec) {
            std::error_code ignored;
            fs::remove(temp, ignored);
            throw Error(Errc::StorageFailure,
                        "cannot place " + container + "/" + path + ": " + ec.message());
        }
        info = BlobInfo{container,
                        path,
                        content_type.empty() ? "application/octet-stream" : content_type,
                        bytes.size(),
                        clock_.now(),
                        c.last_version[path] + 1};
        c.last_version[path] = info.version;
        c.live[path] = info;
        c.index << info_record("put", info).dump() << '\n' << std::flush;
    }
    publish(EventKind::BlobCreated, info);
    return info;
}

Blob BlobStore::get_blob(const std::string& container, const std::string& path) {
    std::shared_lock lock(meta_mutex_);
    const auto& c = container_or_throw(container);
    auto it = c.live.find(path);
    if (it == c.live.end()) throw Error(Errc::NotFound, "blob not found: " + container + "/" + path);
    Blob blob{it->second, {}};
    std::ifstream in(options_.root / container / path, std::ios::binary);
    if (!in) throw Error(Errc::StorageFailure, "cannot read " + container + "/" + path);
    blob.bytes.resize(blob.info.size);
    in.read(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(blob.bytes.size())) {
        throw Error(Errc::StorageFailure, "short read for " + container + "/" + path);
    }
    return blob;
}

std::vector<BlobInfo> BlobStore::list_blobs(const std::string& container,
                                            const std::string& prefix) {
    std::shared_lock lock(meta_mutex_);
    const auto& c = container_or_throw(container);
    std::vector<BlobInfo> out;
    for (auto it = c.live.lower_bound(prefix); it != c.live.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.push_back(it->second);
    }
    return out;
}

void BlobStore::delete_blob(const std::string& container, const std::string& path) {
    std::lock_guard path_guard(path_lock(container, path));
    BlobInfo info;
    {
        std::unique_lock lock(meta_mutex_);
        auto& c = container_or_throw(container);
        auto it = c.live.find(path);
        if (it == c.live.end()) {
            throw Error(Errc::NotFound, "blob not found: " + container + "/" + path);
        }
        info = it->second;
        std::error_code ec;
        fs::remove(options_.root / container / path, ec);
        if (ec) throw Error(Errc::StorageFailure, "cannot delete " + container + "/" + path);
        c.live.erase(it);
        c.index << info_record("delete", info).dump() << '\n' << std::flush;
    }
    publish(EventKind::BlobDeleted, info);
}

}  // namespace bloompipe
