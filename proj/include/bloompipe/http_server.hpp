#pragma once

#include <memory>
#include <string>
#include <thread>
#include <utility>

namespace httplib {
class Server;
}

namespace bloompipe {

/// Splits "host:port" (port may be omitted or 0 for an ephemeral port).
std::pair<std::string, int> split_address(const std::string& address, int default_port);

/// Owns an httplib::Server running on a background thread.
class HttpServer {
public:
    explicit HttpServer(int worker_threads = 64);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    httplib::Server& server() { return *server_; }

    /// Binds and starts serving; returns the bound port. Throws
    /// Error{Unreachable} when the address cannot be bound.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace bloompipe
