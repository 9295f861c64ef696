#include "bloompipe/detector_service.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "bloompipe/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace bloompipe {

using nlohmann::json;

namespace {

std::string error_body(std::string_view message) { return json{{"error", message}}.dump(); }

std::string bearer_token(const httplib::Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return {};
    return header.substr(prefix.size());
}

std::vector<std::string> split_keys(const std::string& text) {
    std::vector<std::string> keys;
    std::stringstream ss(text);
    std::string key;
    while (std::getline(ss, key, ',')) {
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!key.empty() && key.front() == ' ') key.erase(key.begin());
        if (!key.empty()) keys.push_back(key);
    }
    return keys;
}

}  // namespace

DetectorServiceConfig detector_config_from_env() {
    DetectorServiceConfig config;
    const char* keys = std::getenv("DETECTOR_KEYS");
    config.keys = split_keys(keys ? keys : "");
    const char* backend = std::getenv("DETECTOR_BACKEND");
    const std::string kind = backend ? backend : "threshold";
    if (kind == "mock") {
        const char* fixtures = std::getenv("DETECTOR_FIXTURES");
        config.backend = std::make_shared<MockBackend>(
            fixtures ? load_fixture_table(fixtures) : FixtureTable{});
    } else if (kind == "threshold") {
        config.backend = std::make_shared<ThresholdBackend>();
    } else {
        throw Error(Errc::InvalidArgument, "DETECTOR_BACKEND must be mock or threshold");
    }
    return config;
}

DetectorService::DetectorService(DetectorServiceConfig config)
    : config_(std::move(config)), http_(config_.threads) {
    if (!config_.backend) throw Error(Errc::InvalidArgument, "detector service needs a backend");
    if (config_.keys.empty()) throw Error(Errc::InvalidArgument, "detector service needs at least one key");

    auto& svr = http_.server();
    svr.set_payload_max_length(config_.max_body_bytes);

    svr.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (req.path == "/v1/health") return httplib::Server::HandlerResponse::Unhandled;
        if (!authorized(bearer_token(req))) {
            res.status = 401;
            res.set_header("WWW-Authenticate", "Bearer");
            res.set_content(error_body("missing or invalid key"), "application/json");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}, {"backend", config_.backend->name()}}.dump(),
                        "application/json");
    });

    svr.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
        const auto reply = score(req.body, bearer_token(req), req.get_header_value("X-Filename"));
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const char* what = res.status == 413 ? "payload too large" : "request failed";
            res.set_content(error_body(what), "application/json");
        }
    });
}

DetectorService::~DetectorService() { stop(); }

int DetectorService::start(const std::string& host, int port) { return http_.start(host, port); }

void DetectorService::stop() { http_.stop(); }

bool DetectorService::authorized(std::string_view key) const {
    bool ok = false;
    for (const auto& k : config_.keys) ok |= constant_time_equals(key, k);
    return ok && !key.empty();
}

ScoreResponse DetectorService::score(std::string_view image_bytes, std::string_view auth_key,
                                     std::string_view filename) const {
    if (!authorized(auth_key)) return {401, error_body("missing or invalid key")};
    if (image_bytes.size() > config_.max_body_bytes) return {413, error_body("payload too large")};
    Image image;
    try {
        image = decode_image(image_bytes);
    } catch (const Error& e) {
        return {422, error_body(e.what())};
    }
    try {
        ++invocations_;
        DetectionResult result{std::string(filename), config_.backend->detect(image, filename)};
        return {200, to_detection_json(result)};
    } catch (const std::exception& e) {
        const auto id = "err-" + std::to_string(++error_seq_);
        std::fprintf(stderr, "detector: backend failure %s: %s\n", id.c_str(), e.what());
        return {500, json{{"error", "internal"}, {"error_id", id}}.dump()};
    }
}

}  // namespace bloompipe
