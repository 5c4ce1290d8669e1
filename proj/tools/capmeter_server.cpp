// HTTP service hosting interactive training sessions.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "capmeter/server.hpp"

namespace {
httplib::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serve training sessions over HTTP"};
    std::string host = "127.0.0.1";
    int port = 8080;
    capmeter::ServiceConfig config;
    app.add_option("--host", host, "Listen address")->envname("CAPMETER_HOST")->capture_default_str();
    app.add_option("--port", port, "Listen port")->envname("CAPMETER_PORT")->capture_default_str();
    app.add_option("--max-sessions", config.max_sessions, "Concurrent session limit")
        ->envname("CAPMETER_MAX_SESSIONS")
        ->capture_default_str();
    app.add_option("--cadence", config.metric_cadence, "Default epochs between metric frames")
        ->envname("CAPMETER_METRIC_CADENCE")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    capmeter::Service service(config);
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    if (!server.bind_to_port(host, port)) {
        std::cerr << "error: cannot listen on " << host << ':' << port << '\n';
        return 1;
    }
    std::cerr << "listening on " << host << ':' << port << '\n';
    server.listen_after_bind();
    service.sessions().shutdown();
    return 0;
}
