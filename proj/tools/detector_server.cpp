// detector_server: authenticated bloom detector over HTTP.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "bloompipe/detector_service.hpp"
#include "bloompipe/error.hpp"
#include "bloompipe/http_server.hpp"

using namespace bloompipe;

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main() {
    try {
        const char* addr = std::getenv("DETECTOR_ADDR");
        const auto [host, port] = split_address(addr ? addr : "127.0.0.1:8083", 8083);
        DetectorService service(detector_config_from_env());
        const auto bound = service.start(host, port);
        std::printf("detector listening on %s:%d\n", host.c_str(), bound);
        std::fflush(stdout);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        service.stop();
    } catch (const Error& e) {
        std::cerr << "detector_server: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
