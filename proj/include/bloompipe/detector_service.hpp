#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bloompipe/detector.hpp"
#include "bloompipe/http_server.hpp"

namespace bloompipe {

struct DetectorServiceConfig {
    std::vector<std::string> keys;
    std::shared_ptr<const DetectorBackend> backend;
    std::size_t max_body_bytes = 16u << 20;
    int threads = 32;
};

/// Builds the service config from DETECTOR_KEYS / DETECTOR_BACKEND /
/// DETECTOR_FIXTURES.
DetectorServiceConfig detector_config_from_env();

struct ScoreResponse {
    int status = 200;
    std::string body;
};

/// Authenticated scoring endpoint.
///
///   POST /v1/score   Authorization: Bearer <key>, X-Filename: <hint>, raw image body
///   GET  /v1/health  unauthenticated
///
/// Every other route answers 401 without a valid key.
class DetectorService {
public:
    explicit DetectorService(DetectorServiceConfig config);
    ~DetectorService();

    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    int port() const { return http_.port(); }

    /// Transport-independent scoring path used by the HTTP handler.
    ScoreResponse score(std::string_view image_bytes, std::string_view auth_key,
                        std::string_view filename) const;

    bool authorized(std::string_view key) const;

    /// Number of backend invocations so far.
    std::uint64_t invocations() const { return invocations_.load(); }

private:
    DetectorServiceConfig config_;
    HttpServer http_;
    mutable std::atomic<std::uint64_t> invocations_{0};
    mutable std::atomic<std::uint64_t> error_seq_{0};
};

}  // namespace bloompipe
