#include "bloompipe/http_server.hpp"

#include "bloompipe/error.hpp"
#include "httplib.h"

namespace bloompipe {

std::pair<std::string, int> split_address(const std::string& address, int default_port) {
    if (address.empty()) return {"127.0.0.1", default_port};
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) return {address, default_port};
    auto host = address.substr(0, colon);
    if (host.empty()) host = "0.0.0.0";
    try {
        return {host, std::stoi(address.substr(colon + 1))};
    } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, "bad listen address: " + address);
    }
}

HttpServer::HttpServer(int worker_threads) : server_(std::make_unique<httplib::Server>()) {
    const auto n = static_cast<std::size_t>(std::max(worker_threads, 1));
    server_->new_task_queue = [n] { return new httplib::ThreadPool(n); };
    server_->set_keep_alive_max_count(1000);
    server_->set_keep_alive_timeout(1);
    server_->set_tcp_nodelay(true);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error(Errc::Unreachable, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpServer::stop() {
    if (thread_.joinable()) {
        server_->stop();
        thread_.join();
    }
}

}  // namespace bloompipe
